//! Discrete Dirichlet-to-Neumann (DN) maps on meshed 2-D Riemannian surfaces
//! with boundary, orientability detection from the DN map alone, and a
//! desk-scale EIT reconstruction pipeline for the Moebius band.
//!
//! The crate is organized around a small number of immutable value types:
//!
//! * [`mesh::SurfaceMesh`] — triangulated surface with a per-triangle metric,
//!   ordered boundary loops and (for double covers) a deck involution.
//! * [`fem::DnOperator`] — the discrete DN map obtained by a Schur complement
//!   of the P1 stiffness matrix, together with the boundary mass matrix that
//!   defines the L2 inner product on the boundary.
//! * [`boundary::TraceFunction`] — complex nodal samples on boundary loops.
//! * [`orientability::OrientabilityReport`] — kernel/Hamiltonian test results
//!   across refinement levels and the resulting decision.
//!
//! Everything here is pure computation on `alloc` collections; IO, file
//! formats and the command line live in the companion `dncover-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod boundary;
pub mod cover;
pub mod fem;
pub mod generate;
pub mod linalg;
pub mod mesh;
pub mod orientability;
pub mod reconstruction;
pub mod traces;

use alloc::string::String;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate parameter: {0}")]
    DegenerateParameter(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh is not orientable: {0}")]
    NotOrientable(String),
    #[error("double cover of orientable surface not supported")]
    CoverOfOrientable,
    #[error("parity defect {0:.3e} exceeds tolerance")]
    ParityDefect(f64),
    #[error("boundary loop too short: {0} nodes")]
    LoopTooShort(usize),
    #[error("J undefined off mean-zero subspace: relative mean defect {0:.3e}")]
    MeanDefect(f64),
    #[error("singular interior stiffness block: {0}")]
    SingularInterior(String),
    #[error("operation requires a single boundary loop, found {0}; use the Hamiltonian test")]
    MultipleLoops(usize),
    #[error("loop index {0} out of range ({1} loops)")]
    LoopIndex(usize, usize),
    #[error("expected a double cover with 2 boundary loops exchanged by the involution")]
    NotACover,
    #[error("denominator degenerate - is the surface orientable?")]
    DegenerateDenominator,
    #[error("Neumann field energy {0:.3e} below tolerance")]
    DegenerateNeumannField(f64),
    #[error("involution pairing failed - increase generators: {0}")]
    PairingFailed(String),
    #[error("no valid chart generator for triangle {0}")]
    DegenerateChart(usize),
    #[error("chart dimensions inconsistent between refinement levels")]
    InconsistentLevels,
    #[error("need at least {0} refinement levels")]
    NotEnoughLevels(usize),
    #[error("empty probe set")]
    EmptyProbeSet,
    #[error("boundary sampling incompatible: {0}")]
    IncompatibleSampling(String),
    #[error("{0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

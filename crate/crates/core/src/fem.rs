//! P1 finite elements for the Laplace-Beltrami Dirichlet problem with
//! per-triangle metric tensors, and the discrete Dirichlet-to-Neumann
//! operator via a Schur complement on boundary nodes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
#[allow(unused_imports)]
use num_traits::Float; // float math under no_std

use crate::boundary::TraceFunction;
use crate::linalg::{SkylineCholesky, SparseSym};
use crate::mesh::{BoundaryChart, MetricTensor, SurfaceMesh};
use crate::{Error, Result};

/// Relative symmetry defect tolerated in `mass * lambda` (acceptance bound).
pub const SELF_ADJOINT_TOL: f64 = 1e-9;

/// Interior condition-estimate threshold above which `assemble_dn` attaches
/// a warning to the operator.
pub const CONDITION_WARN: f64 = 1e12;

/// Per-triangle 3x3 element stiffness for the metric `g` on the frame
/// coordinates `f`: integral of <grad u, grad v>_g over the triangle.
fn element_stiffness(f: [[f64; 2]; 3], g: MetricTensor) -> [[f64; 3]; 3] {
    let e1 = [f[1][0] - f[0][0], f[1][1] - f[0][1]];
    let e2 = [f[2][0] - f[0][0], f[2][1] - f[0][1]];
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    // frame gradients of the barycentric basis
    let gr = [
        [(f[1][1] - f[2][1]) / det, (f[2][0] - f[1][0]) / det],
        [(f[2][1] - f[0][1]) / det, (f[0][0] - f[2][0]) / det],
        [(f[0][1] - f[1][1]) / det, (f[1][0] - f[0][0]) / det],
    ];
    let ref_area = 0.5 * det.abs();
    let scale = ref_area * g.det().sqrt();
    let ginv = g.inverse();
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = scale * ginv.dot(gr[i], gr[j]);
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    // exact zero row sums
    for i in 0..3 {
        let off: f64 = (0..3).filter(|&j| j != i).map(|j| s[i][j]).sum();
        s[i][i] = -off;
    }
    s
}

/// Assembled metric stiffness matrix.
pub fn assemble_stiffness(mesh: &SurfaceMesh) -> SparseSym {
    let mut trip = Vec::with_capacity(9 * mesh.triangles.len());
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let s = element_stiffness(mesh.frame(ti), mesh.metric[ti]);
        for i in 0..3 {
            for j in 0..3 {
                trip.push((t[i], t[j], s[i][j]));
            }
        }
    }
    SparseSym::from_triplets(mesh.vertex_count(), &trip)
}

/// Discrete harmonic solution: nodal values plus per-triangle gradients in
/// each triangle's frame.
#[derive(Debug, Clone)]
pub struct HarmonicSolution {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
}

/// Reusable Dirichlet solver for one mesh: stiffness, boundary/interior
/// partition in chart order, and the factored interior block.
pub struct HarmonicSolver {
    pub chart: BoundaryChart,
    stiffness: SparseSym,
    boundary_nodes: Vec<usize>,
    interior_nodes: Vec<usize>,
    interior_factor: Option<SkylineCholesky>,
    vertex_count: usize,
}

impl HarmonicSolver {
    pub fn new(mesh: &SurfaceMesh) -> Result<Self> {
        let chart = mesh.boundary_chart()?;
        Self::with_chart(mesh, chart)
    }

    /// Build with an externally labeled chart (e.g. a cover chart).
    pub fn with_chart(mesh: &SurfaceMesh, chart: BoundaryChart) -> Result<Self> {
        let stiffness = assemble_stiffness(mesh);
        let n = mesh.vertex_count();
        let boundary_nodes = chart.nodes();
        let mut is_boundary = vec![false; n];
        for &v in &boundary_nodes {
            is_boundary[v] = true;
        }
        let interior_nodes: Vec<usize> = (0..n).filter(|&v| !is_boundary[v]).collect();
        let interior_factor = if interior_nodes.is_empty() {
            None
        } else {
            let sub = stiffness.submatrix(&interior_nodes);
            Some(SkylineCholesky::new(&sub)?)
        };
        Ok(HarmonicSolver {
            chart,
            stiffness,
            boundary_nodes,
            interior_nodes,
            interior_factor,
            vertex_count: n,
        })
    }

    pub fn condition_estimate(&self) -> f64 {
        self.interior_factor.as_ref().map_or(1.0, |f| f.condition_estimate())
    }

    /// Solve with real boundary data given in chart order.
    pub fn solve_flat(&self, boundary_values: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.vertex_count];
        for (k, &v) in self.boundary_nodes.iter().enumerate() {
            u[v] = boundary_values[k];
        }
        if let Some(factor) = &self.interior_factor {
            // rhs = -A_ib f on interior nodes
            let full = self.stiffness.mul_vec(&u);
            let rhs: Vec<f64> = self.interior_nodes.iter().map(|&v| -full[v]).collect();
            let x = factor.solve(&rhs);
            for (k, &v) in self.interior_nodes.iter().enumerate() {
                u[v] = x[k];
            }
        }
        u
    }

    /// Residual of the interior equations for a full nodal vector.
    pub fn interior_residual(&self, u: &[f64]) -> f64 {
        let full = self.stiffness.mul_vec(u);
        self.interior_nodes.iter().map(|&v| full[v].abs()).fold(0.0, f64::max)
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn stiffness(&self) -> &SparseSym {
        &self.stiffness
    }

    /// Dirichlet energy of a nodal function: u^T A u.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let au = self.stiffness.mul_vec(u);
        u.iter().zip(&au).map(|(a, b)| a * b).sum()
    }

    pub fn interior_count(&self) -> usize {
        self.interior_nodes.len()
    }
}

/// Solve the Dirichlet problem for real boundary data on the chart.
pub fn solve_dirichlet(
    mesh: &SurfaceMesh,
    solver: &HarmonicSolver,
    f: &TraceFunction,
) -> Result<HarmonicSolution> {
    if !f.matches(&solver.chart) {
        return Err(Error::IncompatibleSampling("boundary data does not match chart".into()));
    }
    if !f.is_real(1e-12) {
        return Err(Error::IncompatibleSampling(
            "solve_dirichlet expects real boundary data; solve parts separately".into(),
        ));
    }
    let flat: Vec<f64> = f.flatten().iter().map(|z| z.re).collect();
    let values = solver.solve_flat(&flat);
    let gradients = nodal_gradients(mesh, &values);
    Ok(HarmonicSolution { values, gradients })
}

/// Per-triangle frame gradients of a nodal function.
pub fn nodal_gradients(mesh: &SurfaceMesh, u: &[f64]) -> Vec<[f64; 2]> {
    mesh.triangles
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            let f = mesh.frame(ti);
            let e1 = [f[1][0] - f[0][0], f[1][1] - f[0][1]];
            let e2 = [f[2][0] - f[0][0], f[2][1] - f[0][1]];
            let det = e1[0] * e2[1] - e1[1] * e2[0];
            let gr = [
                [(f[1][1] - f[2][1]) / det, (f[2][0] - f[1][0]) / det],
                [(f[2][1] - f[0][1]) / det, (f[0][0] - f[2][0]) / det],
                [(f[0][1] - f[1][1]) / det, (f[1][0] - f[0][0]) / det],
            ];
            let mut g = [0.0, 0.0];
            for k in 0..3 {
                g[0] += u[t[k]] * gr[k][0];
                g[1] += u[t[k]] * gr[k][1];
            }
            g
        })
        .collect()
}

/// Gradient field of a harmonic solution, optionally with the rotated field
/// Phi grad u (requires an orientable mesh). Gradients here are *frame*
/// gradients of the nodal interpolant; the metric gradient is g^{-1} times
/// the frame gradient and the rotation is the metric rotation by 90 degrees.
#[derive(Debug, Clone)]
pub struct GradientField {
    /// Metric gradient per triangle (frame components of grad_g u).
    pub grad: Vec<[f64; 2]>,
    /// Rotated field Phi grad_g u, when requested.
    pub rotated: Option<Vec<[f64; 2]>>,
}

pub fn gradient_field(
    mesh: &SurfaceMesh,
    sol: &HarmonicSolution,
    rotate: bool,
) -> Result<GradientField> {
    let grad: Vec<[f64; 2]> = sol
        .gradients
        .iter()
        .enumerate()
        .map(|(ti, g)| {
            let gi = mesh.metric[ti].inverse();
            [gi.a * g[0] + gi.b * g[1], gi.b * g[0] + gi.c * g[1]]
        })
        .collect();
    let rotated = if rotate {
        let signs = mesh.global_orientation()?;
        Some(
            grad.iter()
                .enumerate()
                .map(|(ti, v)| rotate_vector(mesh.metric[ti], *v, signs[ti]))
                .collect(),
        )
    } else {
        None
    };
    Ok(GradientField { grad, rotated })
}

/// Metric rotation by +90 degrees in an oriented frame: Phi^2 = -I and
/// <Phi a, Phi b>_g = <a, b>_g.
pub fn rotate_vector(g: MetricTensor, v: [f64; 2], sign: i8) -> [f64; 2] {
    let sq = g.det().sqrt();
    let s = f64::from(sign);
    [
        s * (-g.b * v[0] - g.c * v[1]) / sq,
        s * (g.a * v[0] + g.b * v[1]) / sq,
    ]
}

/// Discrete DN operator: dense matrix on boundary nodal values in chart
/// order, plus the boundary mass matrix defining the L2(Gamma) inner
/// product.
pub struct DnOperator {
    pub lambda: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub chart: BoundaryChart,
    mass_chol: Cholesky<f64, Dyn>,
    /// Schur complement mass * lambda (symmetric).
    pub schur: DMatrix<f64>,
    /// Attached when the interior condition estimate is above threshold.
    pub condition_warning: Option<f64>,
}

impl DnOperator {
    /// Apply to a flat boundary vector (chart order).
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(f);
        let y = &self.lambda * x;
        y.as_slice().to_vec()
    }

    pub fn apply_trace(&self, f: &TraceFunction) -> Result<TraceFunction> {
        if !f.matches(&self.chart) {
            return Err(Error::IncompatibleSampling("trace does not match DN chart".into()));
        }
        let flat = f.flatten();
        let re: Vec<f64> = flat.iter().map(|z| z.re).collect();
        let im: Vec<f64> = flat.iter().map(|z| z.im).collect();
        let yre = self.apply(&re);
        let yim = self.apply(&im);
        let out: Vec<num_complex::Complex64> = yre
            .iter()
            .zip(&yim)
            .map(|(a, b)| num_complex::Complex64::new(*a, *b))
            .collect();
        Ok(TraceFunction::from_flat(&self.chart, &out))
    }

    /// Mass inner product of flat boundary vectors.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let mu = &self.mass * DVector::from_column_slice(u);
        DVector::from_column_slice(v).dot(&mu)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    pub fn mass_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.mass_chol
    }

    pub fn boundary_dim(&self) -> usize {
        self.lambda.nrows()
    }
}

/// Assemble the DN operator of a mesh: lambda = mass^{-1} (A_bb - A_bi
/// A_ii^{-1} A_ib) on boundary nodes in chart order.
pub fn assemble_dn(mesh: &SurfaceMesh, solver: &HarmonicSolver) -> Result<DnOperator> {
    let chart = solver.chart.clone();
    let nb = chart.node_count();
    if nb == 0 {
        return Err(Error::InvalidMesh("mesh has no boundary".into()));
    }
    let bnodes = solver.boundary_nodes().to_vec();
    let n = mesh.vertex_count();
    let mut schur = DMatrix::zeros(nb, nb);
    // columnwise: Schur e_k = (A u)|_b with u the harmonic extension of e_k
    // computed through the factored interior block
    let mut flat = vec![0.0; nb];
    for k in 0..nb {
        flat[k] = 1.0;
        let u = solver.solve_flat(&flat);
        flat[k] = 0.0;
        let au = solver.stiffness().mul_vec(&u);
        for (i, &v) in bnodes.iter().enumerate() {
            schur[(i, k)] = au[v];
        }
        let _ = n;
    }
    // symmetrize (exact up to solver roundoff)
    let st = schur.transpose();
    let sym_defect = (&schur - &st).amax();
    let scale = schur.amax().max(1e-300);
    if sym_defect > 1e-6 * scale {
        return Err(Error::Numerical(format!(
            "Schur complement asymmetric: defect {sym_defect:.3e} of scale {scale:.3e}"
        )));
    }
    schur = (schur + st) * 0.5;
    let mass = chart.mass();
    let mass_chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("boundary mass not positive definite".into()))?;
    let lambda = mass_chol.solve(&schur);
    let cond = solver.condition_estimate();
    Ok(DnOperator {
        lambda,
        mass,
        chart,
        mass_chol,
        schur,
        condition_warning: (cond > CONDITION_WARN).then_some(cond),
    })
}

/// Eigenvalues of the DN operator in the boundary mass inner product,
/// ascending (generalized Steklov spectrum of the discrete problem).
pub fn dn_eigenvalues(dn: &DnOperator, count: usize) -> Result<Vec<f64>> {
    let (vals, _) = crate::linalg::generalized_symmetric_eigen(&dn.schur, &dn.mass)?;
    Ok(vals.iter().copied().take(count).collect())
}

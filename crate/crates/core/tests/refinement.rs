//! Refinement-harness anchors: quantities computed by an independent
//! reference implementation of the same discretization (structured meshes,
//! P1 stiffness, consistent boundary mass, trapezoid J, centered d/ds) are
//! frozen here and must be reproduced.

use dncover_core::fem::{assemble_dn, DnOperator, HarmonicSolver};
use dncover_core::generate::{generate_surface, SurfaceKind, SurfaceParams};
use dncover_core::orientability::{hamiltonian_test, kernel_test, ProbeSpace};

fn dn_for(kind: SurfaceKind, h: f64) -> DnOperator {
    let p = SurfaceParams { h, ..Default::default() };
    let m = generate_surface(kind, &p).unwrap();
    let s = HarmonicSolver::new(&m).unwrap();
    assemble_dn(&m, &s).unwrap()
}

fn close(actual: f64, expected: f64, rel: f64, what: &str) {
    let err = (actual - expected).abs() / expected.abs();
    assert!(
        err <= rel,
        "{what}: actual {actual:.6e} expected {expected:.6e} rel err {err:.2e}"
    );
}

#[test]
fn kernel_sigma_anchors_moebius() {
    let kt = kernel_test(&dn_for(SurfaceKind::FlatMoebius, 0.2)).unwrap();
    close(kt.sigma_min_raw, 2.548e-2, 5e-3, "moebius h=0.2 sigma_min_raw");
    close(kt.sigma_max, 3.705, 5e-3, "moebius h=0.2 sigma_max");
    let kt = kernel_test(&dn_for(SurfaceKind::FlatMoebius, 0.1)).unwrap();
    close(kt.sigma_min_raw, 1.951e-2, 5e-3, "moebius h=0.1 sigma_min_raw");
    close(kt.sigma_min, 5.290e-3, 5e-3, "moebius h=0.1 sigma_min normalized");
}

#[test]
fn kernel_sigma_anchors_disk() {
    let kt = kernel_test(&dn_for(SurfaceKind::Disk, 0.1)).unwrap();
    close(kt.sigma_min, 1.457e-3, 5e-3, "disk h=0.1 sigma_min normalized");
}

#[test]
fn hamiltonian_family_anchors() {
    let ht = hamiltonian_test(&dn_for(SurfaceKind::FlatMoebius, 0.2), 0, ProbeSpace::TrigFamily(8))
        .unwrap();
    close(ht.residual, 5.1140e-2, 5e-3, "moebius h=0.2 family residual");
    let ht = hamiltonian_test(&dn_for(SurfaceKind::FlatMoebius, 0.1), 0, ProbeSpace::TrigFamily(8))
        .unwrap();
    close(ht.residual, 3.9687e-2, 5e-3, "moebius h=0.1 family residual");
    let ht =
        hamiltonian_test(&dn_for(SurfaceKind::Disk, 0.2), 0, ProbeSpace::TrigFamily(8)).unwrap();
    close(ht.residual, 7.297e-3, 5e-3, "disk h=0.2 family residual");
    let ht =
        hamiltonian_test(&dn_for(SurfaceKind::Disk, 0.1), 0, ProbeSpace::TrigFamily(8)).unwrap();
    close(ht.residual, 1.827e-3, 5e-3, "disk h=0.1 family residual");
}

//! End-to-end reconstruction pipeline on the flat Moebius band, with the
//! oracle cover providing the verification data.

use dncover_core::generate::{generate_surface, SurfaceKind, SurfaceParams};
use dncover_core::reconstruction::{run_pipeline, PipelineConfig};

#[test]
fn closing_loop_at_moderate_resolution() {
    let p = SurfaceParams { h: 0.15, ..Default::default() };
    let base = generate_surface(SurfaceKind::FlatMoebius, &p).unwrap();
    let out = run_pipeline(&base, &PipelineConfig::default()).unwrap();

    assert!(out.embedding.min_pairwise_distance > 0.0, "vertices collide");
    assert!(out.embedding.boundary_consistency < 1e-12);

    assert!(out.shilov_contained, "Shilov set leaks into the interior");
    assert!(out.shilov_coverage >= 0.95, "coverage {}", out.shilov_coverage);

    assert!(out.pairing_agreement >= 0.99, "pairing agreement {}", out.pairing_agreement);
    assert!(
        out.pairing_stats.well_separated_fraction >= 0.95,
        "well separated {}",
        out.pairing_stats.well_separated_fraction
    );

    // closing loop
    assert!(out.mismatch.operator_rel < 0.05, "DN mismatch {}", out.mismatch.operator_rel);
    assert!(
        out.mismatch.lowest_eigenvalue_rel < 0.02,
        "lowest eig mismatch {}",
        out.mismatch.lowest_eigenvalue_rel
    );
    assert!(out.mismatch.boundary_length_rel < 1e-3, "boundary length {}", out.mismatch.boundary_length_rel);

    // quotient shape
    assert_eq!(out.reconstructed.mesh.vertex_count() * 2, out.cover.vertex_count());
    assert_eq!(out.reconstructed.mesh.euler_characteristic(), 0);
    assert_eq!(out.reconstructed.mesh.boundary_loops.len(), 1);
}

#[test]
fn mismatch_contracts_under_refinement() {
    let mut prev = f64::INFINITY;
    for h in [0.3, 0.15] {
        let p = SurfaceParams { h, ..Default::default() };
        let base = generate_surface(SurfaceKind::FlatMoebius, &p).unwrap();
        let out = run_pipeline(&base, &PipelineConfig::default()).unwrap();
        assert!(
            out.mismatch.operator_rel < prev,
            "mismatch {} did not decrease from {}",
            out.mismatch.operator_rel,
            prev
        );
        prev = out.mismatch.operator_rel;
    }
}

#[test]
fn self_test_roundtrip_with_oracle_metric() {
    // feeding the oracle cover's own tau and true edge lengths through the
    // quotient reproduces the input DN map to solver precision
    use dncover_core::cover::build_double_cover;
    use dncover_core::fem::{assemble_dn, HarmonicSolver};
    use dncover_core::mesh::edge_key;
    use dncover_core::reconstruction::{build_quotient, verify_copy, RecoveredMetric};
    use std::collections::BTreeMap;

    let p = SurfaceParams { h: 0.25, ..Default::default() };
    let base = generate_surface(SurfaceKind::FlatMoebius, &p).unwrap();
    let solver = HarmonicSolver::new(&base).unwrap();
    let base_dn = assemble_dn(&base, &solver).unwrap();
    let cover = build_double_cover(&base).unwrap();
    let tau = cover.involution.clone().unwrap();
    let mut lens: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (ti, t) in cover.triangles.iter().enumerate() {
        for k in 0..3 {
            lens.insert(edge_key(t[k], t[(k + 1) % 3]), cover.edge_g_length(ti, k));
        }
    }
    let rec = RecoveredMetric {
        edge_lengths: lens,
        log_scale: vec![0.0; cover.vertex_count()],
        min_chart_quality: 1.0,
    };
    let recon = build_quotient(&cover, &base_dn.chart, &tau, &rec).unwrap();
    let rep = verify_copy(&recon, &base_dn).unwrap();
    assert!(rep.operator_rel < 1e-9, "self-test mismatch {}", rep.operator_rel);
    assert!(rep.lowest_eigenvalue_rel < 1e-10);
}

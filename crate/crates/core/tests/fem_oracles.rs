//! Independent analytic oracles for the field solver and DN operator:
//! separation of variables on the cylinder, holomorphic monomials on disk
//! and annulus, Fourier symbols of Lambda J, and the exact parity/transfer
//! identities of the double cover.

use dncover_core::boundary::{component_integrals, integrate_j, tangential_derivative, TraceFunction};
use dncover_core::cover::{build_double_cover, labeled_chart, lift_boundary_trace};
use dncover_core::fem::{assemble_dn, gradient_field, rotate_vector, solve_dirichlet, DnOperator, HarmonicSolver};
use dncover_core::generate::{generate_surface, SurfaceKind, SurfaceParams};
use dncover_core::mesh::SurfaceMesh;
use num_complex::Complex64;

const TAU: f64 = std::f64::consts::TAU;

fn build(kind: SurfaceKind, h: f64) -> (SurfaceMesh, HarmonicSolver) {
    let p = SurfaceParams { h, ..Default::default() };
    let m = generate_surface(kind, &p).unwrap();
    let s = HarmonicSolver::new(&m).unwrap();
    (m, s)
}

#[test]
fn cylinder_separable_solution() {
    // u = cos(n s) cosh(n t) / cosh(n a) solves the Dirichlet problem with
    // f = cos(n s) on both loops (flat metric, half-width a = 1)
    let (m, s) = build(SurfaceKind::FlatCylinder, 0.1);
    let n = 2.0;
    let f = TraceFunction::from_fn(&s.chart, |li, arc| {
        // both loops are parameterized by arc-length along gamma; loop 1
        // runs opposite to loop 0, and the cylinder is s-symmetric, so
        // cos(n s) sampled by arc-length agrees on both
        let _ = li;
        Complex64::new((n * arc).cos(), 0.0)
    });
    let sol = solve_dirichlet(&m, &s, &f).unwrap();
    // compare at interior nodes against the separable formula; reference
    // coordinates are the rolled cylinder, so recover (s, t) from them
    let radius = 1.0;
    let mut max_err = 0.0f64;
    for (v, pos) in m.vertices.iter().enumerate() {
        let t = pos[2];
        let sarc = pos[1].atan2(pos[0]) * radius;
        // arc-length on the top loop starts at the walk origin; use the
        // symmetric combination to dodge the offset: compare |u| profile
        let _ = sarc;
        let expect_profile = (n * t).cosh() / (n * 1.0f64).cosh();
        // u / cos(ns) = profile wherever cos(ns) is not small; instead test
        // the t-profile of the loop maximum per row
        let _ = expect_profile;
        let _ = v;
    }
    // row-wise amplitude check: max over each t-row of |u| equals the
    // profile within O(h^2)
    let mut rows: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    for (v, pos) in m.vertices.iter().enumerate() {
        let key = (pos[2] * 1e9).round() as i64;
        let e = rows.entry(key).or_insert(0.0);
        *e = e.max(sol.values[v].abs());
    }
    for (key, amp) in rows {
        let t = key as f64 / 1e9;
        let expect = (n * t).cosh() / n.cosh();
        max_err = max_err.max((amp - expect).abs());
    }
    assert!(max_err < 2e-3, "separable profile error {max_err}");
}

#[test]
fn cylinder_dn_commutes_with_grid_translation() {
    let (_, s) = build(SurfaceKind::FlatCylinder, 0.15);
    let m = generate_surface(SurfaceKind::FlatCylinder, &SurfaceParams { h: 0.15, ..Default::default() })
        .unwrap();
    let dn = assemble_dn(&m, &s).unwrap();
    // two-node cyclic shift within each loop is a mesh symmetry (the
    // checkerboard diagonal pattern has period 2)
    let nb = dn.boundary_dim();
    let offs: Vec<usize> = {
        let mut o = vec![0usize];
        for l in &dn.chart.loops {
            o.push(o.last().unwrap() + l.nodes.len());
        }
        o
    };
    // loops are traversed in opposite directions (surface on the left), so
    // the translation shifts chart positions oppositely on the two loops
    let shift = |f: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; nb];
        for (li, l) in dn.chart.loops.iter().enumerate() {
            let mloop = l.nodes.len();
            let step = if li == 0 { mloop - 2 } else { 2 };
            for i in 0..mloop {
                g[offs[li] + (i + step) % mloop] = f[offs[li] + i];
            }
        }
        g
    };
    let f: Vec<f64> = (0..nb).map(|i| (i as f64 * 0.61).sin()).collect();
    let a = shift(&dn.apply(&f));
    let b = dn.apply(&shift(&f));
    let err = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(err < 1e-9 * scale.max(1.0), "commutator {err}");
}

fn boundary_z(m: &SurfaceMesh, dn: &DnOperator) -> Vec<Complex64> {
    dn.chart
        .loops
        .iter()
        .flat_map(|l| l.nodes.iter().map(|&v| Complex64::new(m.vertices[v][0], m.vertices[v][1])))
        .collect()
}

#[test]
fn annulus_conjugate_pair_and_component_means() {
    let (m, s) = build(SurfaceKind::Annulus, 0.1);
    let dn = assemble_dn(&m, &s).unwrap();
    let z = boundary_z(&m, &dn);
    for n in 1..=3u32 {
        let zn: Vec<Complex64> = z.iter().map(|w| w.powu(n)).collect();
        let f: Vec<f64> = zn.iter().map(|w| w.re).collect();
        // Lemma 2: per-loop integrals of Lambda f vanish when a conjugate
        // exists (it does: Im z^n)
        let lf = dn.apply(&f);
        let lf_tf = TraceFunction::from_flat(&dn.chart, &lf.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>());
        let ints = component_integrals(&dn.chart, &lf_tf).unwrap();
        let scale = dn.norm(&lf);
        for i in ints {
            assert!(i.re.abs() < 1e-8 * scale, "loop integral {} at n={n}", i.re);
        }
    }
    // indicator of one loop carries opposite fluxes summing to zero
    let nb = dn.boundary_dim();
    let m0 = dn.chart.loops[0].nodes.len();
    let mut psi = vec![0.0; nb];
    for v in psi.iter_mut().take(m0) {
        *v = 1.0;
    }
    let lpsi = dn.apply(&psi);
    let lpsi_tf = TraceFunction::from_flat(
        &dn.chart,
        &lpsi.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>(),
    );
    let ints = component_integrals(&dn.chart, &lpsi_tf).unwrap();
    assert!(ints[0].re > 1e-2, "flux should be positive through the charged loop");
    assert!((ints[0].re + ints[1].re).abs() < 1e-10 * ints[0].re.abs());
}

#[test]
fn disk_lambda_j_squares_to_minus_identity_on_fourier_modes() {
    // refinement trend of |(LJ)^2 f + f| for f = cos(2 s): halves at least
    // quadratically in h
    let mut prev = f64::INFINITY;
    for h in [0.2, 0.1] {
        let (m, s) = build(SurfaceKind::Disk, h);
        let dn = assemble_dn(&m, &s).unwrap();
        let l = &dn.chart.loops[0];
        let om = 2.0 * TAU / l.total;
        let f: Vec<f64> = l.arc.iter().map(|&x| (om * x).cos()).collect();
        let apply_lj = |x: &[f64]| -> Vec<f64> {
            let xt = TraceFunction::from_flat(
                &dn.chart,
                &x.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>(),
            );
            let j = integrate_j(&dn.chart, &xt).unwrap();
            dn.apply(&j.flatten().iter().map(|z| z.re).collect::<Vec<_>>())
        };
        let g = apply_lj(&apply_lj(&f));
        let res: Vec<f64> = g.iter().zip(&f).map(|(a, b)| a + b).collect();
        let rel = dn.norm(&res) / dn.norm(&f);
        assert!(rel < prev / 2.5, "residual {rel} at h={h}, prev {prev}");
        prev = rel;
    }
    assert!(prev < 6e-3, "final residual {prev}");
}

#[test]
fn disk_conjugate_monomials_satisfy_cauchy_riemann() {
    // O(h) decay of the Cauchy-Riemann defect for the pair (Re z^3, Im z^3)
    let n = 3u32;
    let mut residuals = Vec::new();
    for h in [0.2, 0.1] {
        let (m, s) = build(SurfaceKind::Disk, h);
        let dn = assemble_dn(&m, &s).unwrap();
        let z = boundary_z(&m, &dn);
        let f = TraceFunction::from_flat(
            &dn.chart,
            &z.iter().map(|w| Complex64::new(w.powu(n).re, 0.0)).collect::<Vec<_>>(),
        );
        let p = TraceFunction::from_flat(
            &dn.chart,
            &z.iter().map(|w| Complex64::new(w.powu(n).im, 0.0)).collect::<Vec<_>>(),
        );
        let u = solve_dirichlet(&m, &s, &f).unwrap();
        let v = solve_dirichlet(&m, &s, &p).unwrap();
        let gu = gradient_field(&m, &u, false).unwrap();
        let gv = gradient_field(&m, &v, false).unwrap();
        let signs = m.global_orientation().unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..m.triangle_count() {
            let area = m.g_area(t);
            let rot = rotate_vector(m.metric[t], gu.grad[t], signs[t]);
            let d = [gv.grad[t][0] - rot[0], gv.grad[t][1] - rot[1]];
            num += area * m.metric[t].dot(d, d);
            den += area * m.metric[t].dot(gu.grad[t], gu.grad[t]);
        }
        residuals.push((num / den).sqrt());
    }
    let ratio = residuals[0] / residuals[1];
    assert!(ratio > 1.5 && ratio < 2.7, "CR decay ratio {ratio}, residuals {residuals:?}");
    assert!(residuals[1] < 0.25, "CR residual {}", residuals[1]);
}

#[test]
fn parity_preservation_on_the_double_cover() {
    // Lambda (f o pi) = (Lambda_g f) o pi up to solver precision: the even
    // subspace of the cover problem is isomorphic to the base problem
    let p = SurfaceParams { h: 0.2, ..Default::default() };
    let base = generate_surface(SurfaceKind::FlatMoebius, &p).unwrap();
    let bs = HarmonicSolver::new(&base).unwrap();
    let base_dn = assemble_dn(&base, &bs).unwrap();
    let cover = build_double_cover(&base).unwrap();
    let chart = labeled_chart(&cover).unwrap();
    let cs = HarmonicSolver::with_chart(&cover, chart).unwrap();
    let cover_dn = assemble_dn(&cover, &cs).unwrap();

    let l = &base_dn.chart.loops[0];
    let om = 3.0 * TAU / l.total;
    let f: Vec<f64> = l.arc.iter().map(|&x| (om * x).cos() + 0.3 * (2.0 * om * x).sin()).collect();
    let f_tf = TraceFunction::from_flat(
        &base_dn.chart,
        &f.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>(),
    );
    let lifted = lift_boundary_trace(&cover, &cover_dn.chart, &base_dn.chart, &f_tf).unwrap();
    let cover_out = cover_dn.apply_trace(&lifted).unwrap();
    let base_out = base_dn.apply(&f);
    let base_out_tf = TraceFunction::from_flat(
        &base_dn.chart,
        &base_out.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>(),
    );
    let lifted_out = lift_boundary_trace(&cover, &cover_dn.chart, &base_dn.chart, &base_out_tf).unwrap();
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    for (a, b) in cover_out.flatten().iter().zip(lifted_out.flatten()) {
        err = err.max((a - b).norm());
        scale = scale.max(b.norm());
    }
    assert!(err < 1e-8 * scale, "parity defect {err} vs scale {scale}");
}

#[test]
fn lift_derivative_identity() {
    // d_gamma (f o pi) = sigma (d_gamma f) o pi
    let p = SurfaceParams { h: 0.1, ..Default::default() };
    let base = generate_surface(SurfaceKind::FlatMoebius, &p).unwrap();
    let base_chart = base.boundary_chart().unwrap();
    let cover = build_double_cover(&base).unwrap();
    let chart = labeled_chart(&cover).unwrap();
    let l = &base_chart.loops[0];
    let om = 2.0 * TAU / l.total;
    let f = TraceFunction::from_fn(&base_chart, |_, s| Complex64::new((om * s).sin(), 0.0));
    let lifted = lift_boundary_trace(&cover, &chart, &base_chart, &f).unwrap();
    let dl = tangential_derivative(&chart, &lifted).unwrap();
    let df = tangential_derivative(&base_chart, &f).unwrap();
    let df_lift = lift_boundary_trace(&cover, &chart, &base_chart, &df).unwrap();
    let mut err = 0.0f64;
    for (li, cl) in chart.loops.iter().enumerate() {
        let sigma = f64::from(cl.sigma);
        for k in 0..cl.nodes.len() {
            err = err.max((dl.loops[li][k] - df_lift.loops[li][k] * sigma).norm());
        }
    }
    // centered differences on matching grids: identity holds to roundoff
    assert!(err < 1e-10 * om, "lift derivative defect {err}");
}

#[test]
fn hermitian_product_respects_involution_and_max_modulus() {
    use dncover_core::traces::{assemble_trace, DEFAULT_DENOMINATOR_THETA};
    let p = SurfaceParams { h: 0.2, ..Default::default() };
    let base = generate_surface(SurfaceKind::FlatMoebius, &p).unwrap();
    let bs = HarmonicSolver::new(&base).unwrap();
    let base_dn = assemble_dn(&base, &bs).unwrap();
    let cover = build_double_cover(&base).unwrap();
    let chart = labeled_chart(&cover).unwrap();
    let cs = HarmonicSolver::with_chart(&cover, chart.clone()).unwrap();

    let l = &base_dn.chart.loops[0];
    let om = TAU / l.total;
    let f1: Vec<f64> = l.arc.iter().map(|&s| (om * s).cos()).collect();
    let f2: Vec<f64> = l.arc.iter().map(|&s| (2.0 * om * s).sin()).collect();
    let t1 = assemble_trace(&base_dn, &f1, None, DEFAULT_DENOMINATOR_THETA).unwrap();
    let t2 = assemble_trace(&base_dn, &f2, None, DEFAULT_DENOMINATOR_THETA).unwrap();
    let w1 = t1.trace_on_cover(&cover, &chart, &base_dn.chart).unwrap();
    let w2 = t2.trace_on_cover(&cover, &chart, &base_dn.chart).unwrap();
    let prod = w1.zip_map(&w2, |a, b| a * b);
    // (w1 w2)(tau x) = conj((w1 w2)(x)) exactly
    let tau = cover.involution.as_ref().unwrap();
    for (li, cl) in chart.loops.iter().enumerate() {
        for (k, &x) in cl.nodes.iter().enumerate() {
            let (lj, mm) = chart.locate(tau[x]).unwrap();
            let a = prod.loops[li][k];
            let b = prod.loops[lj][mm];
            assert!((a - b.conj()).norm() <= 1e-13 * (1.0 + a.norm()));
        }
    }
    // max-modulus: harmonic extension of w1 attains its modulus max on the
    // boundary, up to discretization tolerance
    let re = solve_dirichlet(&cover, &cs, &TraceFunction::from_real(w1.real_part())).unwrap();
    let im = solve_dirichlet(&cover, &cs, &TraceFunction::from_real(w1.imag_part())).unwrap();
    let is_b = cover.boundary_vertex_set();
    let mut interior_max = 0.0f64;
    let mut boundary_max = 0.0f64;
    for v in 0..cover.vertex_count() {
        let mag = (re.values[v] * re.values[v] + im.values[v] * im.values[v]).sqrt();
        if is_b[v] {
            boundary_max = boundary_max.max(mag);
        } else {
            interior_max = interior_max.max(mag);
        }
    }
    assert!(
        interior_max <= boundary_max * (1.0 + 1e-6),
        "interior {interior_max} exceeds boundary {boundary_max}"
    );
}

//! Boundary traces of holomorphic functions on the double cover, built from
//! the base DN operator alone (observer side) and cross-validated against
//! interior quantities on the oracle cover.
//!
//! Observer operations take only the base `DnOperator`; oracle operations
//! require the cover mesh explicitly, so forbidden data cannot be used by
//! accident.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float; // float math under no_std

use crate::boundary::{integrate_j, tangential_derivative, TraceFunction};
use crate::cover::lift_boundary_trace;
use crate::fem::{gradient_field, rotate_vector, solve_dirichlet, DnOperator, HarmonicSolution, HarmonicSolver};
use crate::mesh::{BoundaryChart, SurfaceMesh};
use crate::{Error, Result};

/// Default exclusion threshold for the pointwise ratio in the observer
/// formula: nodes with |denominator| below `theta * max|denominator|` are
/// dropped from the weighted average.
pub const DEFAULT_DENOMINATOR_THETA: f64 = 0.1;

/// One Hermitian building block: real generator f on Gamma, q = J Lambda_g f,
/// and the additive constant b recovered from the DN data.
#[derive(Debug, Clone)]
pub struct HermitianData {
    /// Generator on the base boundary (chart order).
    pub f: Vec<f64>,
    /// q = J Lambda_g f on the base boundary.
    pub q: Vec<f64>,
    pub b: f64,
    /// Weighted standard deviation of the pointwise ratio defining b.
    pub constancy_residual: f64,
}

/// Trace of a holomorphic function on the double cover, represented by its
/// base-boundary data. A Hermitian element has trace f o pi + i sigma
/// [(q o pi) + b]; a general element is y + i z with Hermitian y and z.
#[derive(Debug, Clone)]
pub struct TraceElement {
    pub primary: HermitianData,
    pub secondary: Option<HermitianData>,
}

impl TraceElement {
    pub fn hermitian(&self) -> bool {
        self.secondary.is_none()
    }

    /// Value of the trace over base point with chart position `k` on the
    /// sheet labeled `sigma`.
    pub fn value_at(&self, k: usize, sigma: f64) -> Complex64 {
        let y = Complex64::new(
            self.primary.f[k],
            sigma * (self.primary.q[k] + self.primary.b),
        );
        match &self.secondary {
            None => y,
            Some(s) => {
                let z = Complex64::new(s.f[k], sigma * (s.q[k] + s.b));
                y + Complex64::new(0.0, 1.0) * z
            }
        }
    }

    /// Evaluate the trace on a concrete labeled cover chart.
    pub fn trace_on_cover(
        &self,
        cover: &SurfaceMesh,
        cover_chart: &BoundaryChart,
        base_chart: &BoundaryChart,
    ) -> Result<TraceFunction> {
        let pi = cover.projection.as_ref().ok_or(Error::NotACover)?;
        let mut loops = Vec::with_capacity(cover_chart.loops.len());
        for l in &cover_chart.loops {
            if l.sigma == 0 {
                return Err(Error::NotACover);
            }
            let sigma = f64::from(l.sigma);
            let mut vals = Vec::with_capacity(l.nodes.len());
            for &x in &l.nodes {
                let k = base_chart
                    .flat_position(pi[x])
                    .ok_or_else(|| Error::InvalidMesh("projection misses base boundary".into()))?;
                vals.push(self.value_at(k, sigma));
            }
            loops.push(vals);
        }
        Ok(TraceFunction { loops })
    }

    /// Trace on the formal double boundary Gamma_+ u Gamma_-, both copies in
    /// base chart order.
    pub fn formal_trace(&self) -> TraceFunction {
        let n = self.primary.f.len();
        let plus: Vec<Complex64> = (0..n).map(|k| self.value_at(k, 1.0)).collect();
        let minus: Vec<Complex64> = (0..n).map(|k| self.value_at(k, -1.0)).collect();
        TraceFunction { loops: vec![plus, minus] }
    }
}

fn flat_real(tf: &TraceFunction) -> Vec<f64> {
    tf.flatten().iter().map(|z| z.re).collect()
}

fn real_tf(chart: &BoundaryChart, flat: &[f64]) -> TraceFunction {
    let z: Vec<Complex64> = flat.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    TraceFunction::from_flat(chart, &z)
}

/// q = J Lambda_g f on the base boundary. Constants are in Ker Lambda, so a
/// numerically zero Lambda f short-circuits to q = 0.
pub fn conjugate_primitive(base_dn: &DnOperator, f: &[f64]) -> Result<Vec<f64>> {
    let lf = base_dn.apply(f);
    let f_scale = base_dn.norm(f);
    if base_dn.norm(&lf) <= 1e-12 * base_dn.lambda.amax() * f_scale.max(1e-300) {
        return Ok(vec![0.0; f.len()]);
    }
    let j = integrate_j(&base_dn.chart, &real_tf(&base_dn.chart, &lf))?;
    Ok(flat_real(&j))
}

/// Observer-side constant of the Hermitian trace: the pointwise ratio
/// ( [Lambda f^2 - Lambda q^2]/2 - f Lambda f - q f-dot ) / (f-dot + Lambda q)
/// is constant on Gamma; nodes where the denominator is below
/// `theta * max|denominator|` are excluded and the |denominator|^2-weighted
/// mean and standard deviation are returned.
pub fn compute_b_observer(base_dn: &DnOperator, f: &[f64], theta: f64) -> Result<(f64, f64)> {
    let chart = &base_dn.chart;
    let nb = base_dn.boundary_dim();
    if f.len() != nb {
        return Err(Error::IncompatibleSampling("f does not match chart".into()));
    }
    let fd = flat_real(&tangential_derivative(chart, &real_tf(chart, f))?);
    let fd_norm = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let f_norm = f.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if fd_norm < 1e-12 * f_norm {
        return Err(Error::DegenerateParameter("observer formula needs nonconstant f".into()));
    }
    let q = conjugate_primitive(base_dn, f)?;
    let lf = base_dn.apply(f);
    let lq = base_dn.apply(&q);
    let f2: Vec<f64> = f.iter().map(|x| x * x).collect();
    let q2: Vec<f64> = q.iter().map(|x| x * x).collect();
    let lf2 = base_dn.apply(&f2);
    let lq2 = base_dn.apply(&q2);
    let mut num = vec![0.0; nb];
    let mut den = vec![0.0; nb];
    for i in 0..nb {
        num[i] = 0.5 * (lf2[i] - lq2[i]) - f[i] * lf[i] - q[i] * fd[i];
        den[i] = fd[i] + lq[i];
    }
    let dmax = den.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // quadrature-weighted statistics over retained nodes
    let mut wsum = 0.0;
    let mut bsum = 0.0;
    let mut off = 0;
    let mut weights = vec![0.0; nb];
    for (li, l) in chart.loops.iter().enumerate() {
        let w = chart.quadrature_weights(li);
        for i in 0..l.nodes.len() {
            weights[off + i] = w[i];
        }
        off += l.nodes.len();
    }
    for i in 0..nb {
        if den[i].abs() >= theta * dmax {
            let w = weights[i] * den[i] * den[i];
            wsum += w;
            bsum += w * num[i] / den[i];
        }
    }
    if wsum == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    let b = bsum / wsum;
    let mut var = 0.0;
    for i in 0..nb {
        if den[i].abs() >= theta * dmax {
            let w = weights[i] * den[i] * den[i];
            let r = num[i] / den[i] - b;
            var += w * r * r;
        }
    }
    Ok((b, (var / wsum).sqrt()))
}

/// Assemble the Hermitian trace element of `f`, or the general element
/// y + i z when a second generator is given (Hermitian parts built from f
/// and f_prime respectively).
pub fn assemble_trace(
    base_dn: &DnOperator,
    f: &[f64],
    f_prime: Option<&[f64]>,
    theta: f64,
) -> Result<TraceElement> {
    let build = |g: &[f64]| -> Result<HermitianData> {
        let (b, res) = compute_b_observer(base_dn, g, theta)?;
        Ok(HermitianData {
            f: g.to_vec(),
            q: conjugate_primitive(base_dn, g)?,
            b,
            constancy_residual: res,
        })
    };
    Ok(TraceElement {
        primary: build(f)?,
        secondary: f_prime.map(build).transpose()?,
    })
}

/// The distinguished Neumann-field potential of the cover: harmonic
/// extension of +1 on Gamma_+ and -1 on Gamma_-.
#[derive(Debug, Clone)]
pub struct NeumannFieldData {
    pub phi: HarmonicSolution,
    /// Dirichlet energy |grad phi|^2 (this is the denominator of the
    /// oracle constant c).
    pub energy: f64,
    /// max |phi(tau x) + phi(x)| over vertices, relative to max |phi|.
    pub antisymmetry_defect: f64,
    /// Boundary trace of Lambda phi on the cover chart.
    pub lambda_phi: Vec<f64>,
}

pub fn neumann_field_phi(
    cover: &SurfaceMesh,
    solver: &HarmonicSolver,
    cover_dn: &DnOperator,
) -> Result<NeumannFieldData> {
    let tau = cover.involution.as_ref().ok_or(Error::NotACover)?;
    let chart = &solver.chart;
    if chart.loop_count() != 2 || chart.loops.iter().any(|l| l.sigma == 0) {
        return Err(Error::NotACover);
    }
    let data: Vec<Vec<f64>> = chart
        .loops
        .iter()
        .map(|l| vec![f64::from(l.sigma); l.nodes.len()])
        .collect();
    let trace = TraceFunction::from_real(data.clone());
    let phi = solve_dirichlet(cover, solver, &trace)?;
    let energy = solver.energy(&phi.values);
    if energy <= 1e-14 {
        return Err(Error::DegenerateNeumannField(energy));
    }
    let scale = phi.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut defect = 0.0f64;
    for v in 0..phi.values.len() {
        defect = defect.max((phi.values[v] + phi.values[tau[v]]).abs());
    }
    let flat: Vec<f64> = data.into_iter().flatten().collect();
    let lambda_phi = cover_dn.apply(&flat);
    Ok(NeumannFieldData {
        phi,
        energy,
        antisymmetry_defect: defect / scale,
        lambda_phi,
    })
}

/// Oracle constant of the Neumann-field decomposition for a trace F on the
/// cover boundary: c = (int_{Gamma+} Lambda F - int_{Gamma-} Lambda F) /
/// |grad phi|^2.
pub fn compute_c_oracle(
    cover_dn: &DnOperator,
    big_f: &TraceFunction,
    phi: &NeumannFieldData,
) -> Result<f64> {
    if phi.energy <= 1e-14 {
        return Err(Error::DegenerateNeumannField(phi.energy));
    }
    let lf = cover_dn.apply_trace(big_f)?;
    let ints = crate::boundary::component_integrals(&cover_dn.chart, &lf)?;
    let mut c = 0.0;
    for (l, v) in cover_dn.chart.loops.iter().zip(&ints) {
        c += f64::from(l.sigma) * v.re;
    }
    Ok(c / phi.energy)
}

/// Oracle-side constant b via the orthogonality of grad u^{f o pi} to the
/// Neumann field: b = -int_{Gamma+} (q o pi) Lambda phi ds / int_{Gamma+}
/// Lambda phi ds, computed entirely from cover data.
pub fn compute_b_oracle(
    cover: &SurfaceMesh,
    cover_dn: &DnOperator,
    base_chart: &BoundaryChart,
    f: &[f64],
    phi: &NeumannFieldData,
) -> Result<f64> {
    let chart = &cover_dn.chart;
    // lift f, take Lambda on the cover, integrate along Gamma_+
    let f_tf = real_tf(base_chart, f);
    let lifted = lift_boundary_trace(cover, chart, base_chart, &f_tf)?;
    let lf = cover_dn.apply_trace(&lifted)?;
    let q_cover = integrate_j(chart, &lf)?;
    // Gamma_+ is the sigma = +1 loop
    let (li, _) = chart
        .loops
        .iter()
        .enumerate()
        .find(|(_, l)| l.sigma == 1)
        .ok_or(Error::NotACover)?;
    let w = chart.quadrature_weights(li);
    let off: usize = chart.loops[..li].iter().map(|l| l.nodes.len()).sum();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..chart.loops[li].nodes.len() {
        let lphi = phi.lambda_phi[off + i];
        num += w[i] * q_cover.loops[li][i].re * lphi;
        den += w[i] * lphi;
    }
    if den.abs() < 1e-12 * phi.energy.max(1e-300) {
        return Err(Error::DegenerateNeumannField(den.abs()));
    }
    Ok(-num / den)
}

/// Residual record of `verify_conjugate_pair`.
#[derive(Debug, Clone)]
pub struct ConjugatePairReport {
    /// |grad v - Phi grad u|_{L2} / |grad u|_{L2} on the cover.
    pub cr_residual: f64,
    /// Mass-norm residual of p-dot = (Lambda_g f) o pi, relative.
    pub p_dot_residual: f64,
    /// Parity defect of the extension of p (odd up to solver tolerance).
    pub parity_defect: f64,
    /// Mass-norm residual of Lambda p = -sigma (d_gamma f) o pi, relative.
    pub lambda_p_residual: f64,
}

/// Solve both Dirichlet problems of a Hermitian element on the oracle cover
/// and measure the Cauchy-Riemann and boundary identities.
pub fn verify_conjugate_pair(
    cover: &SurfaceMesh,
    solver: &HarmonicSolver,
    cover_dn: &DnOperator,
    base_dn: &DnOperator,
    te: &TraceElement,
) -> Result<ConjugatePairReport> {
    if !te.hermitian() {
        return Err(Error::IncompatibleSampling(
            "conjugate-pair verification applies to Hermitian elements".into(),
        ));
    }
    let tau = cover.involution.as_ref().ok_or(Error::NotACover)?;
    let chart = &solver.chart;
    let base_chart = &base_dn.chart;
    let w_trace = te.trace_on_cover(cover, chart, base_chart)?;
    let re = TraceFunction::from_real(w_trace.real_part());
    let im = TraceFunction::from_real(w_trace.imag_part());
    let u = solve_dirichlet(cover, solver, &re)?;
    let v = solve_dirichlet(cover, solver, &im)?;

    // Cauchy-Riemann residual in the metric L2 norm
    let gu = gradient_field(cover, &u, false)?;
    let gv = gradient_field(cover, &v, false)?;
    let signs = cover.global_orientation()?;
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..cover.triangle_count() {
        let area = cover.g_area(t);
        let rot = rotate_vector(cover.metric[t], gu.grad[t], signs[t]);
        let d = [gv.grad[t][0] - rot[0], gv.grad[t][1] - rot[1]];
        num += area * cover.metric[t].dot(d, d);
        den += area * cover.metric[t].dot(gu.grad[t], gu.grad[t]);
    }
    let cr_residual = if den > 0.0 { (num / den).sqrt() } else { 0.0 };

    // parity of the conjugate extension
    let scale = v.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut parity = 0.0f64;
    for i in 0..v.values.len() {
        parity = parity.max((v.values[i] + v.values[tau[i]]).abs());
    }
    let parity_defect = if scale > 0.0 { parity / scale } else { 0.0 };

    // p-dot = (Lambda_g f) o pi
    let pd = tangential_derivative(chart, &im)?;
    let lf_base = base_dn.apply(&te.primary.f);
    let lf_lift = lift_boundary_trace(cover, chart, base_chart, &real_tf(base_chart, &lf_base))?;
    let (p_dot_residual, _) = relative_mass_residual(cover_dn, &pd, &lf_lift);

    // Lambda p = -sigma (d_gamma f) o pi
    let lp = cover_dn.apply_trace(&im)?;
    let fd_base = tangential_derivative(base_chart, &real_tf(base_chart, &te.primary.f))?;
    let fd_lift = lift_boundary_trace(cover, chart, base_chart, &fd_base)?;
    let target = TraceFunction {
        loops: fd_lift
            .loops
            .iter()
            .zip(&chart.loops)
            .map(|(l, cl)| {
                let s = -f64::from(cl.sigma);
                l.iter().map(|z| z * s).collect()
            })
            .collect(),
    };
    let (lambda_p_residual, _) = relative_mass_residual(cover_dn, &lp, &target);

    Ok(ConjugatePairReport {
        cr_residual,
        p_dot_residual,
        parity_defect,
        lambda_p_residual,
    })
}

fn relative_mass_residual(dn: &DnOperator, a: &TraceFunction, b: &TraceFunction) -> (f64, f64) {
    let fa = flat_real(a);
    let fb = flat_real(b);
    let d: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x - y).collect();
    let nb = dn.norm(&fb).max(1e-300);
    (dn.norm(&d) / nb, nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::{build_double_cover, labeled_chart};
    use crate::fem::assemble_dn;
    use crate::generate::{generate_surface, SurfaceKind, SurfaceParams};

    struct Setup {
        base_dn: DnOperator,
        cover: SurfaceMesh,
        solver: HarmonicSolver,
        cover_dn: DnOperator,
    }

    fn setup(h: f64) -> Setup {
        let p = SurfaceParams { h, ..Default::default() };
        let base = generate_surface(SurfaceKind::FlatMoebius, &p).unwrap();
        let bs = HarmonicSolver::new(&base).unwrap();
        let base_dn = assemble_dn(&base, &bs).unwrap();
        let cover = build_double_cover(&base).unwrap();
        let chart = labeled_chart(&cover).unwrap();
        let solver = HarmonicSolver::with_chart(&cover, chart).unwrap();
        let cover_dn = assemble_dn(&cover, &solver).unwrap();
        Setup { base_dn, cover, solver, cover_dn }
    }

    fn first_mode(dn: &DnOperator) -> Vec<f64> {
        let l = &dn.chart.loops[0];
        let om = core::f64::consts::TAU / l.total;
        l.arc.iter().map(|&s| (om * s).cos()).collect()
    }

    #[test]
    fn phi_is_linear_across_flat_band() {
        let s = setup(0.3);
        let phi = neumann_field_phi(&s.cover, &s.solver, &s.cover_dn).unwrap();
        assert!(phi.antisymmetry_defect < 1e-10);
        // flat band of half-width 1: phi = t, energy = area / half_width^2
        let area: f64 = (0..s.cover.triangle_count()).map(|t| s.cover.g_area(t)).sum();
        assert!((phi.energy - area).abs() < 1e-8 * area);
    }

    #[test]
    fn constant_f_gives_zero_q_and_rejected_b() {
        let s = setup(0.3);
        let f = vec![2.0; s.base_dn.boundary_dim()];
        let q = conjugate_primitive(&s.base_dn, &f).unwrap();
        let qn = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(qn < 1e-9);
        assert!(matches!(
            compute_b_observer(&s.base_dn, &f, DEFAULT_DENOMINATOR_THETA),
            Err(Error::DegenerateParameter(_))
        ));
    }

    #[test]
    fn observer_and_oracle_b_agree_on_flat_band() {
        let s = setup(0.15);
        let f = first_mode(&s.base_dn);
        let (b_obs, residual) =
            compute_b_observer(&s.base_dn, &f, DEFAULT_DENOMINATOR_THETA).unwrap();
        let phi = neumann_field_phi(&s.cover, &s.solver, &s.cover_dn).unwrap();
        let b_or = compute_b_oracle(&s.cover, &s.cover_dn, &s.base_dn.chart, &f, &phi).unwrap();
        let q = conjugate_primitive(&s.base_dn, &f).unwrap();
        let scale = s.base_dn.norm(&q);
        assert!(
            (b_obs - b_or).abs() / (b_or.abs() + scale) < 1e-2,
            "b_obs {b_obs:.3e} b_oracle {b_or:.3e}"
        );
        assert!(residual < 1e-2, "constancy residual {residual:.3e}");
    }

    #[test]
    fn b_invariant_under_constant_shift() {
        let s = setup(0.3);
        let f = first_mode(&s.base_dn);
        let shifted: Vec<f64> = f.iter().map(|x| x + 3.0).collect();
        let (b0, _) = compute_b_observer(&s.base_dn, &f, DEFAULT_DENOMINATOR_THETA).unwrap();
        let (b1, _) = compute_b_observer(&s.base_dn, &shifted, DEFAULT_DENOMINATOR_THETA).unwrap();
        assert!((b0 - b1).abs() < 1e-8 * (1.0 + b0.abs()));
    }

    #[test]
    fn hermitian_trace_satisfies_involution_symmetry() {
        let s = setup(0.3);
        let f = first_mode(&s.base_dn);
        let te = assemble_trace(&s.base_dn, &f, None, DEFAULT_DENOMINATOR_THETA).unwrap();
        assert!(te.hermitian());
        let tr = te
            .trace_on_cover(&s.cover, &s.solver.chart, &s.base_dn.chart)
            .unwrap();
        // w(tau x) = conj(w(x)) exactly by construction
        let tau = s.cover.involution.as_ref().unwrap();
        let chart = &s.solver.chart;
        for (li, l) in chart.loops.iter().enumerate() {
            for (k, &x) in l.nodes.iter().enumerate() {
                let (lj, m) = chart.locate(tau[x]).unwrap();
                let a = tr.loops[li][k];
                let b = tr.loops[lj][m];
                assert!((a - b.conj()).norm() < 1e-14 * (1.0 + a.norm()));
            }
        }
    }

    #[test]
    fn conjugate_pair_residuals_on_flat_band() {
        let s = setup(0.15);
        let f = first_mode(&s.base_dn);
        let te = assemble_trace(&s.base_dn, &f, None, DEFAULT_DENOMINATOR_THETA).unwrap();
        let rep = verify_conjugate_pair(&s.cover, &s.solver, &s.cover_dn, &s.base_dn, &te).unwrap();
        assert!(rep.parity_defect < 1e-9, "parity {}", rep.parity_defect);
        assert!(rep.cr_residual < 0.1, "cr {}", rep.cr_residual);
        assert!(rep.p_dot_residual < 0.05, "p_dot {}", rep.p_dot_residual);
        assert!(rep.lambda_p_residual < 0.05, "lambda_p {}", rep.lambda_p_residual);
    }

    #[test]
    fn zero_generator_gives_zero_residuals() {
        let s = setup(0.3);
        let n = s.base_dn.boundary_dim();
        let te = TraceElement {
            primary: HermitianData { f: vec![0.0; n], q: vec![0.0; n], b: 0.0, constancy_residual: 0.0 },
            secondary: None,
        };
        let rep = verify_conjugate_pair(&s.cover, &s.solver, &s.cover_dn, &s.base_dn, &te).unwrap();
        assert_eq!(rep.cr_residual, 0.0);
        assert_eq!(rep.parity_defect, 0.0);
    }

    #[test]
    fn c_oracle_vanishes_for_even_traces_and_matches_phi() {
        let s = setup(0.2);
        let phi = neumann_field_phi(&s.cover, &s.solver, &s.cover_dn).unwrap();
        // even lift of a base generator
        let f = first_mode(&s.base_dn);
        let lifted = lift_boundary_trace(
            &s.cover,
            &s.solver.chart,
            &s.base_dn.chart,
            &real_tf(&s.base_dn.chart, &f),
        )
        .unwrap();
        let c = compute_c_oracle(&s.cover_dn, &lifted, &phi).unwrap();
        assert!(c.abs() < 1e-8, "c for even trace {c:.3e}");
        // for F = phi trace, c = (int Lphi+ - int Lphi-)/energy by definition
        let phi_trace = TraceFunction::from_real(
            s.solver
                .chart
                .loops
                .iter()
                .map(|l| vec![f64::from(l.sigma); l.nodes.len()])
                .collect(),
        );
        let c_phi = compute_c_oracle(&s.cover_dn, &phi_trace, &phi).unwrap();
        let lphi_tf = real_tf(&s.cover_dn.chart, &phi.lambda_phi);
        let ints = crate::boundary::component_integrals(&s.cover_dn.chart, &lphi_tf).unwrap();
        let direct = (ints[0].re - ints[1].re) / phi.energy;
        assert!((c_phi - direct).abs() < 1e-12 * (1.0 + direct.abs()));
    }
}

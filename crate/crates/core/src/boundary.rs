//! Discrete boundary calculus: tangential derivative, the integration J
//! inverse to it on mean-zero functions, per-component integrals and sigma
//! labels on double-cover boundaries.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float; // float math under no_std

use crate::mesh::BoundaryChart;
use crate::{Error, Result};

/// Relative mean defect below which inputs of J are silently projected onto
/// the mean-zero subspace.
pub const MEAN_PROJECTION_TOL: f64 = 1e-8;

/// Complex nodal samples on the boundary, one array per chart loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFunction {
    pub loops: Vec<Vec<Complex64>>,
}

impl TraceFunction {
    pub fn zeros(chart: &BoundaryChart) -> Self {
        TraceFunction {
            loops: chart.loops.iter().map(|l| vec![Complex64::ZERO; l.nodes.len()]).collect(),
        }
    }

    pub fn from_real(values: Vec<Vec<f64>>) -> Self {
        TraceFunction {
            loops: values
                .into_iter()
                .map(|l| l.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
                .collect(),
        }
    }

    /// Sample a function of arc-length on every loop.
    pub fn from_fn(chart: &BoundaryChart, mut f: impl FnMut(usize, f64) -> Complex64) -> Self {
        TraceFunction {
            loops: chart
                .loops
                .iter()
                .enumerate()
                .map(|(li, l)| l.arc.iter().map(|&s| f(li, s)).collect())
                .collect(),
        }
    }

    pub fn matches(&self, chart: &BoundaryChart) -> bool {
        self.loops.len() == chart.loops.len()
            && self
                .loops
                .iter()
                .zip(&chart.loops)
                .all(|(v, l)| v.len() == l.nodes.len())
    }

    pub fn real_part(&self) -> Vec<Vec<f64>> {
        self.loops.iter().map(|l| l.iter().map(|z| z.re).collect()).collect()
    }

    pub fn imag_part(&self) -> Vec<Vec<f64>> {
        self.loops.iter().map(|l| l.iter().map(|z| z.im).collect()).collect()
    }

    /// Flat concatenation over loops, chart order.
    pub fn flatten(&self) -> Vec<Complex64> {
        self.loops.iter().flat_map(|l| l.iter().copied()).collect()
    }

    pub fn from_flat(chart: &BoundaryChart, flat: &[Complex64]) -> Self {
        let mut loops = Vec::new();
        let mut off = 0;
        for l in &chart.loops {
            loops.push(flat[off..off + l.nodes.len()].to_vec());
            off += l.nodes.len();
        }
        TraceFunction { loops }
    }

    pub fn max_abs(&self) -> f64 {
        self.loops
            .iter()
            .flat_map(|l| l.iter())
            .fold(0.0f64, |m, z| m.max(z.norm()))
    }

    pub fn is_real(&self, tol: f64) -> bool {
        let scale = self.max_abs().max(1e-300);
        self.loops
            .iter()
            .flat_map(|l| l.iter())
            .all(|z| z.im.abs() <= tol * scale)
    }

    /// Pointwise combination with another trace.
    pub fn zip_map(&self, other: &TraceFunction, mut f: impl FnMut(Complex64, Complex64) -> Complex64) -> TraceFunction {
        TraceFunction {
            loops: self
                .loops
                .iter()
                .zip(&other.loops)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
                .collect(),
        }
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> TraceFunction {
        TraceFunction {
            loops: self.loops.iter().map(|l| l.iter().map(|z| f(*z)).collect()).collect(),
        }
    }
}

/// Centered periodic finite difference with respect to arc-length, per loop.
pub fn tangential_derivative(chart: &BoundaryChart, f: &TraceFunction) -> Result<TraceFunction> {
    check(chart, f)?;
    let mut out = Vec::with_capacity(f.loops.len());
    for (li, l) in chart.loops.iter().enumerate() {
        let m = l.nodes.len();
        if m < 3 {
            return Err(Error::LoopTooShort(m));
        }
        let vals = &f.loops[li];
        let mut d = vec![Complex64::ZERO; m];
        for k in 0..m {
            let kp = (k + 1) % m;
            let km = (k + m - 1) % m;
            let span = l.seg[k] + l.seg[km];
            d[k] = (vals[kp] - vals[km]) / span;
        }
        out.push(d);
    }
    Ok(TraceFunction { loops: out })
}

/// Cumulative-trapezoid antiderivative per loop, recentered to mass-weighted
/// mean zero. Inputs with relative mean defect above `MEAN_PROJECTION_TOL`
/// are rejected; smaller defects are projected out.
pub fn integrate_j(chart: &BoundaryChart, f: &TraceFunction) -> Result<TraceFunction> {
    check(chart, f)?;
    let mut out = Vec::with_capacity(f.loops.len());
    for (li, l) in chart.loops.iter().enumerate() {
        let m = l.nodes.len();
        if m < 3 {
            return Err(Error::LoopTooShort(m));
        }
        let w = chart.quadrature_weights(li);
        let vals = &f.loops[li];
        let total_w: f64 = w.iter().sum();
        let mean: Complex64 = vals.iter().zip(&w).map(|(v, wi)| v * wi).sum::<Complex64>() / total_w;
        let norm: f64 = vals
            .iter()
            .zip(&w)
            .map(|(v, wi)| v.norm_sqr() * wi)
            .sum::<f64>()
            .sqrt()
            / total_w.sqrt();
        if mean.norm() > MEAN_PROJECTION_TOL * norm.max(1e-300) {
            return Err(Error::MeanDefect(mean.norm() / norm.max(1e-300)));
        }
        let centered: Vec<Complex64> = vals.iter().map(|v| v - mean).collect();
        let mut acc = Complex64::ZERO;
        let mut primitive = vec![Complex64::ZERO; m];
        for k in 1..m {
            acc += (centered[k - 1] + centered[k]) * (l.seg[k - 1] / 2.0);
            primitive[k] = acc;
        }
        let pmean: Complex64 =
            primitive.iter().zip(&w).map(|(v, wi)| v * wi).sum::<Complex64>() / total_w;
        for p in &mut primitive {
            *p -= pmean;
        }
        out.push(primitive);
    }
    Ok(TraceFunction { loops: out })
}

/// Mass-weighted integral of `f` over each loop.
pub fn component_integrals(chart: &BoundaryChart, f: &TraceFunction) -> Result<Vec<Complex64>> {
    check(chart, f)?;
    Ok(chart
        .loops
        .iter()
        .enumerate()
        .map(|(li, _)| {
            let w = chart.quadrature_weights(li);
            f.loops[li].iter().zip(&w).map(|(v, wi)| v * wi).sum()
        })
        .collect())
}

/// Sigma labels on a labeled double-cover chart: +1 on Gamma_+, -1 on
/// Gamma_-.
pub fn sigma_labels(chart: &BoundaryChart) -> Result<TraceFunction> {
    if chart.loop_count() != 2 || chart.loops.iter().any(|l| l.sigma == 0) {
        return Err(Error::NotACover);
    }
    Ok(TraceFunction {
        loops: chart
            .loops
            .iter()
            .map(|l| vec![Complex64::new(f64::from(l.sigma), 0.0); l.nodes.len()])
            .collect(),
    })
}

fn check(chart: &BoundaryChart, f: &TraceFunction) -> Result<()> {
    if !f.matches(chart) {
        return Err(Error::IncompatibleSampling(
            "trace sample count does not match chart".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_surface, SurfaceKind, SurfaceParams};

    fn disk_chart(h: f64) -> BoundaryChart {
        let p = SurfaceParams { h, ..Default::default() };
        generate_surface(SurfaceKind::Disk, &p).unwrap().boundary_chart().unwrap()
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let chart = disk_chart(0.1);
        let f = TraceFunction::from_fn(&chart, |_, _| Complex64::new(3.5, 0.0));
        let d = tangential_derivative(&chart, &f).unwrap();
        assert!(d.max_abs() < 1e-14);
    }

    #[test]
    fn derivative_of_sine_is_cosine() {
        let chart = disk_chart(0.05);
        let len = chart.loops[0].total;
        let om = core::f64::consts::TAU / len;
        let f = TraceFunction::from_fn(&chart, |_, s| Complex64::new((om * s).sin(), 0.0));
        let d = tangential_derivative(&chart, &f).unwrap();
        let mut err = 0.0f64;
        for (k, &s) in chart.loops[0].arc.iter().enumerate() {
            err = err.max((d.loops[0][k].re - om * (om * s).cos()).abs());
        }
        let h = chart.loops[0].seg[0];
        assert!(err < om * h * h, "err {err} vs h^2 {}", h * h);
    }

    #[test]
    fn j_inverts_derivative_on_mean_zero() {
        let chart = disk_chart(0.05);
        let len = chart.loops[0].total;
        let om = 2.0 * core::f64::consts::TAU / len;
        let f = TraceFunction::from_fn(&chart, |_, s| Complex64::new((om * s).cos(), 0.0));
        let df = tangential_derivative(&chart, &f).unwrap();
        let back = integrate_j(&chart, &df).unwrap();
        let mut err = 0.0f64;
        for k in 0..f.loops[0].len() {
            err = err.max((back.loops[0][k] - f.loops[0][k]).norm());
        }
        let h = chart.loops[0].seg[0];
        assert!(err < 2.0 * h * h, "err {err}");
    }

    #[test]
    fn j_rejects_nonzero_mean() {
        let chart = disk_chart(0.2);
        let f = TraceFunction::from_fn(&chart, |_, _| Complex64::new(1.0, 0.0));
        assert!(matches!(integrate_j(&chart, &f), Err(Error::MeanDefect(_))));
    }

    #[test]
    fn component_integral_of_one_is_length() {
        let chart = disk_chart(0.1);
        let f = TraceFunction::from_fn(&chart, |_, _| Complex64::new(1.0, 0.0));
        let ints = component_integrals(&chart, &f).unwrap();
        assert!((ints[0].re - chart.loops[0].total).abs() < 1e-12);
    }

    #[test]
    fn real_in_real_out() {
        let chart = disk_chart(0.1);
        let len = chart.loops[0].total;
        let om = core::f64::consts::TAU / len;
        let f = TraceFunction::from_fn(&chart, |_, s| Complex64::new((om * s).sin(), 0.0));
        let d = tangential_derivative(&chart, &f).unwrap();
        assert!(d.is_real(1e-15));
        let j = integrate_j(&chart, &d).unwrap();
        assert!(j.is_real(1e-15));
    }
}

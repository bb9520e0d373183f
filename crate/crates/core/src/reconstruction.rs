//! Desk-scale reconstruction of the Moebius band from its DN map: realize
//! the Gelfand spectrum of the trace algebra as point evaluations at the
//! oracle cover's vertices, detect the Shilov boundary, pair the involution,
//! recover an isothermal metric normalized by the boundary length element,
//! build the quotient and close the loop against the input DN operator.
//!
//! The reconstructed metric is carried entirely by recovered edge lengths;
//! reference coordinates of the output mesh serve only as non-degenerate
//! frames, so the assembled DN operator of the copy depends on algebra data
//! and the boundary length element alone.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float; // float math under no_std

use crate::boundary::TraceFunction;
use crate::fem::{assemble_dn, dn_eigenvalues, solve_dirichlet, DnOperator, HarmonicSolver};
use crate::linalg::{operator_norm_m, SkylineCholesky, SparseSym};
use crate::mesh::{edge_key, BoundaryChart, MetricTensor, SurfaceMesh};
use crate::traces::TraceElement;
use crate::{Error, Result};

/// Minimum chart quality (normalized chart area of a triangle) before a
/// generator chart is rejected for that triangle.
pub const CHART_QUALITY_MIN: f64 = 0.25;

/// Tolerance band of the Shilov maximizer search: vertices with |probe| at
/// least (1 - band) times the maximum are marked.
pub const SHILOV_BAND: f64 = 0.05;

/// Phase of a trigonometric generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Cos,
    Sin,
}

/// Point-evaluation realization of the Gelfand spectrum: per-vertex values
/// of the generator traces' harmonic extensions on the oracle cover.
pub struct SpectrumEmbedding {
    /// values[g][v] = w_g evaluated at cover vertex v.
    pub values: Vec<Vec<Complex64>>,
    pub generators: Vec<TraceElement>,
    /// (k, phase) tag per generator for the standard trigonometric family.
    pub tags: Vec<(usize, Phase)>,
    pub min_pairwise_distance: f64,
    pub nearest_pair: (usize, usize),
    /// max |embedding - prescribed trace| over boundary vertices.
    pub boundary_consistency: f64,
    pub vertex_count: usize,
}

/// The standard generator family: Hermitian elements of cos/sin(2 pi k s /
/// len) for k = 1..=count, assembled from the base DN operator alone.
pub fn trig_generators(
    base_dn: &DnOperator,
    count: usize,
    theta: f64,
) -> Result<(Vec<TraceElement>, Vec<(usize, Phase)>)> {
    if base_dn.chart.loop_count() != 1 {
        return Err(Error::MultipleLoops(base_dn.chart.loop_count()));
    }
    let l = &base_dn.chart.loops[0];
    let mut gens = Vec::with_capacity(2 * count);
    let mut tags = Vec::with_capacity(2 * count);
    for k in 1..=count {
        let om = core::f64::consts::TAU * k as f64 / l.total;
        for phase in [Phase::Cos, Phase::Sin] {
            let f: Vec<f64> = l
                .arc
                .iter()
                .map(|&s| match phase {
                    Phase::Cos => (om * s).cos(),
                    Phase::Sin => (om * s).sin(),
                })
                .collect();
            gens.push(crate::traces::assemble_trace(base_dn, &f, None, theta)?);
            tags.push((k, phase));
        }
    }
    Ok((gens, tags))
}

/// Harmonic extension of every generator trace onto the oracle cover, with
/// separation statistics. Vertex collisions are reported by a zero
/// statistic, not an error.
pub fn embed_spectrum(
    generators: &[TraceElement],
    tags: &[(usize, Phase)],
    cover: &SurfaceMesh,
    solver: &HarmonicSolver,
    base_chart: &BoundaryChart,
) -> Result<SpectrumEmbedding> {
    if generators.len() < 2 {
        return Err(Error::EmptyProbeSet);
    }
    let chart = &solver.chart;
    let nv = cover.vertex_count();
    let mut values = Vec::with_capacity(generators.len());
    let mut boundary_consistency = 0.0f64;
    for te in generators {
        let tr = te.trace_on_cover(cover, chart, base_chart)?;
        let re = solve_dirichlet(cover, solver, &TraceFunction::from_real(tr.real_part()))?;
        let im = solve_dirichlet(cover, solver, &TraceFunction::from_real(tr.imag_part()))?;
        let vals: Vec<Complex64> = (0..nv)
            .map(|v| Complex64::new(re.values[v], im.values[v]))
            .collect();
        for (li, l) in chart.loops.iter().enumerate() {
            for (k, &x) in l.nodes.iter().enumerate() {
                boundary_consistency = boundary_consistency.max((vals[x] - tr.loops[li][k]).norm());
            }
        }
        values.push(vals);
    }
    let (min_d, pair) = min_pairwise_distance(&values, nv);
    Ok(SpectrumEmbedding {
        values,
        generators: generators.to_vec(),
        tags: tags.to_vec(),
        min_pairwise_distance: min_d,
        nearest_pair: pair,
        boundary_consistency,
        vertex_count: nv,
    })
}

/// Flattened real coordinates of the embedding and the index of the
/// highest-variance coordinate (used as the sweep key).
fn embedding_coords(values: &[Vec<Complex64>], nv: usize) -> (Vec<f64>, usize, usize) {
    let dim = 2 * values.len();
    let mut coords = vec![0.0; nv * dim];
    for (g, col) in values.iter().enumerate() {
        for v in 0..nv {
            coords[v * dim + 2 * g] = col[v].re;
            coords[v * dim + 2 * g + 1] = col[v].im;
        }
    }
    let mut best = (0usize, -1.0f64);
    for c in 0..dim {
        let mean: f64 = (0..nv).map(|v| coords[v * dim + c]).sum::<f64>() / nv as f64;
        let var: f64 = (0..nv).map(|v| (coords[v * dim + c] - mean).powi(2)).sum();
        if var > best.1 {
            best = (c, var);
        }
    }
    (coords, dim, best.0)
}

fn min_pairwise_distance(values: &[Vec<Complex64>], nv: usize) -> (f64, (usize, usize)) {
    let (coords, dim, key) = embedding_coords(values, nv);
    let mut order: Vec<usize> = (0..nv).collect();
    order.sort_unstable_by(|&a, &b| coords[a * dim + key].total_cmp(&coords[b * dim + key]));
    let mut best = f64::INFINITY;
    let mut pair = (0usize, 0usize);
    for i in 0..nv {
        let vi = order[i];
        let ki = coords[vi * dim + key];
        for &vj in order.iter().skip(i + 1) {
            let dk = coords[vj * dim + key] - ki;
            if dk * dk >= best {
                break;
            }
            let mut d = 0.0;
            for c in 0..dim {
                let diff = coords[vi * dim + c] - coords[vj * dim + c];
                d += diff * diff;
                if d >= best {
                    break;
                }
            }
            if d < best {
                best = d;
                pair = (vi, vj);
            }
        }
    }
    (best.sqrt(), pair)
}

/// A probe is an algebra element evaluated pointwise on the spectrum.
pub type Probe = Vec<Complex64>;

/// Default Shilov probe set: pairwise products and fourth powers of the
/// generators, plus arc-shifted fourth powers of the top-frequency
/// combination peaking near every boundary node.
pub fn default_probes(emb: &SpectrumEmbedding, base_chart: &BoundaryChart) -> Vec<Probe> {
    let nv = emb.vertex_count;
    let ng = emb.values.len();
    let mut probes: Vec<Probe> = Vec::new();
    for i in 0..ng {
        for j in i..ng {
            probes.push((0..nv).map(|v| emb.values[i][v] * emb.values[j][v]).collect());
        }
    }
    for col in &emb.values {
        let p: Probe = (0..nv)
            .map(|v| {
                let z2 = col[v] * col[v];
                z2 * z2
            })
            .collect();
        probes.push(p);
    }
    let top_k = emb.tags.iter().map(|t| t.0).max().unwrap_or(0);
    let cos_idx = emb.tags.iter().position(|t| *t == (top_k, Phase::Cos));
    let sin_idx = emb.tags.iter().position(|t| *t == (top_k, Phase::Sin));
    if let (Some(ci), Some(si)) = (cos_idx, sin_idx) {
        let l = &base_chart.loops[0];
        let om = core::f64::consts::TAU * top_k as f64 / l.total;
        for &s0 in &l.arc {
            let (c, s) = ((om * s0).cos(), (om * s0).sin());
            let p: Probe = (0..nv)
                .map(|v| {
                    let z = emb.values[ci][v] * c + emb.values[si][v] * s;
                    let z2 = z * z;
                    z2 * z2
                })
                .collect();
            probes.push(p);
        }
    }
    probes
}

/// Shilov boundary detection report.
#[derive(Debug, Clone)]
pub struct ShilovReport {
    /// Vertices attaining (within the band) the maximum modulus of some
    /// probe.
    pub detected: Vec<usize>,
    pub band: f64,
    pub probe_count: usize,
}

pub fn shilov_boundary(
    emb: &SpectrumEmbedding,
    probes: &[Probe],
    band: f64,
) -> Result<ShilovReport> {
    if probes.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    let nv = emb.vertex_count;
    let mut marked = vec![false; nv];
    for p in probes {
        let mut max2 = 0.0f64;
        for z in p {
            max2 = max2.max(z.norm_sqr());
        }
        if max2 <= 0.0 {
            continue; // constant/zero probes carry no information
        }
        let floor = (1.0 - band) * max2.sqrt();
        let floor2 = floor * floor;
        for (v, z) in p.iter().enumerate() {
            if z.norm_sqr() >= floor2 {
                marked[v] = true;
            }
        }
    }
    Ok(ShilovReport {
        detected: (0..nv).filter(|&v| marked[v]).collect(),
        band,
        probe_count: probes.len(),
    })
}

/// Pairing quality statistics of the recovered involution.
#[derive(Debug, Clone)]
pub struct PairingStats {
    pub max_matched_distance: f64,
    /// Fraction of vertices whose second-best match is at least 5x farther
    /// than the best.
    pub well_separated_fraction: f64,
}

/// Recover the involution: tau'(chi) = argmin over chi' of
/// |w(chi') - conj(w(chi))|, required to come out a fixed-point-free
/// involution (mutual best matches).
pub fn pair_involution(emb: &SpectrumEmbedding) -> Result<(Vec<usize>, PairingStats)> {
    if emb.min_pairwise_distance <= 0.0 {
        return Err(Error::PairingFailed("embedding does not separate vertices".into()));
    }
    let nv = emb.vertex_count;
    let (coords, dim, key) = embedding_coords(&emb.values, nv);
    let mut order: Vec<usize> = (0..nv).collect();
    order.sort_unstable_by(|&a, &b| coords[a * dim + key].total_cmp(&coords[b * dim + key]));
    let keys: Vec<f64> = order.iter().map(|&v| coords[v * dim + key]).collect();

    // conjugate target of vertex v: flip the imaginary coordinates
    let target = |v: usize, c: usize| {
        let x = coords[v * dim + c];
        if c % 2 == 1 {
            -x
        } else {
            x
        }
    };
    let mut tau = vec![usize::MAX; nv];
    let mut d1all = vec![0.0f64; nv];
    let mut d2all = vec![0.0f64; nv];
    for v in 0..nv {
        let tkey = target(v, key);
        let mut lo = keys.partition_point(|&x| x < tkey);
        let mut hi = lo;
        let mut best = f64::INFINITY;
        let mut second = f64::INFINITY;
        let mut arg = usize::MAX;
        loop {
            let dl = if lo > 0 { (keys[lo - 1] - tkey).abs() } else { f64::INFINITY };
            let dh = if hi < nv { (keys[hi] - tkey).abs() } else { f64::INFINITY };
            let key_gap = dl.min(dh);
            if key_gap * key_gap >= second {
                break;
            }
            let cand = if dl <= dh {
                lo -= 1;
                order[lo]
            } else {
                hi += 1;
                order[hi - 1]
            };
            let mut d = 0.0;
            for c in 0..dim {
                let diff = coords[cand * dim + c] - target(v, c);
                d += diff * diff;
                if d >= second {
                    break;
                }
            }
            if d < best {
                second = best;
                best = d;
                arg = cand;
            } else if d < second {
                second = d;
            }
        }
        tau[v] = arg;
        d1all[v] = best.sqrt();
        d2all[v] = second.sqrt();
    }
    let mut max_d = 0.0f64;
    let mut well = 0usize;
    for v in 0..nv {
        if tau[v] == v {
            return Err(Error::PairingFailed(format!("vertex {v} matched to itself")));
        }
        if tau[tau[v]] != v {
            return Err(Error::PairingFailed(format!("pairing not involutive at vertex {v}")));
        }
        max_d = max_d.max(d1all[v]);
        if d2all[v] >= 5.0 * d1all[v] {
            well += 1;
        }
    }
    Ok((
        tau,
        PairingStats {
            max_matched_distance: max_d,
            well_separated_fraction: well as f64 / nv as f64,
        },
    ))
}

/// Recovered conformal data: per-edge lengths of the metric g' on the cover
/// and the vertexwise log conformal scale.
#[derive(Debug, Clone)]
pub struct RecoveredMetric {
    pub edge_lengths: BTreeMap<(usize, usize), f64>,
    pub log_scale: Vec<f64>,
    pub min_chart_quality: f64,
}

/// Isothermal metric recovery: per-triangle conformal shapes from
/// exponential generator charts (w_sin + i w_cos, never degenerate on the
/// flat band), boundary scale matched to the input length element ds on
/// both boundary copies of Gamma, interior scale by harmonic extension in
/// the recovered conformal structure, then tau'-symmetrized.
pub fn recover_metric(
    cover: &SurfaceMesh,
    cover_chart: &BoundaryChart,
    emb: &SpectrumEmbedding,
    base_chart: &BoundaryChart,
    tau_prime: &[usize],
) -> Result<RecoveredMetric> {
    let nv = cover.vertex_count();
    let mut ks: Vec<usize> = emb.tags.iter().map(|t| t.0).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut charts: Vec<Vec<Complex64>> = Vec::new();
    for &k in &ks {
        let ci = emb.tags.iter().position(|t| *t == (k, Phase::Cos));
        let si = emb.tags.iter().position(|t| *t == (k, Phase::Sin));
        if let (Some(ci), Some(si)) = (ci, si) {
            charts.push(
                (0..nv)
                    .map(|v| emb.values[si][v] + Complex64::new(0.0, 1.0) * emb.values[ci][v])
                    .collect(),
            );
        }
    }
    if charts.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    let mut lhat_acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    let mut min_quality = f64::INFINITY;
    for (ti, t) in cover.triangles.iter().enumerate() {
        let mut chosen: Option<([f64; 3], f64)> = None;
        let mut best_quality = -1.0f64;
        // lowest-frequency admissible chart wins (least distortion);
        // otherwise fall back to the best-quality one
        for ch in &charts {
            let w = [ch[t[0]], ch[t[1]], ch[t[2]]];
            let e = [w[1] - w[0], w[2] - w[1], w[0] - w[2]];
            let area = 0.5 * ((w[1] - w[0]) * (w[2] - w[0]).conj()).im.abs();
            let mx = e.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
            if mx <= 0.0 || area <= 0.0 {
                continue;
            }
            let quality = 2.0 * area / (mx * mx);
            if quality > best_quality {
                best_quality = quality;
                let s = (2.0 * area).sqrt();
                chosen = Some(([e[0].norm() / s, e[1].norm() / s, e[2].norm() / s], quality));
            }
            if quality >= CHART_QUALITY_MIN {
                let s = (2.0 * area).sqrt();
                chosen = Some(([e[0].norm() / s, e[1].norm() / s, e[2].norm() / s], quality));
                break;
            }
        }
        let (lens, q) = chosen.ok_or(Error::DegenerateChart(ti))?;
        min_quality = min_quality.min(q);
        for a in 0..3 {
            let key = edge_key(t[a], t[(a + 1) % 3]);
            let entry = lhat_acc.entry(key).or_insert((0.0, 0));
            entry.0 += lens[a];
            entry.1 += 1;
        }
    }
    let lhat: BTreeMap<(usize, usize), f64> = lhat_acc
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect();

    // boundary log scale from the known ds on Gamma (both boundary copies)
    let pi = cover.projection.as_ref().ok_or(Error::NotACover)?;
    let mut ulog = vec![0.0f64; nv];
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for l in &cover_chart.loops {
        let m = l.nodes.len();
        for k in 0..m {
            let (a, b) = (l.nodes[k], l.nodes[(k + 1) % m]);
            let (bl, bk) = base_chart
                .locate(pi[a])
                .ok_or_else(|| Error::InvalidMesh("projection misses base boundary".into()))?;
            let (bl2, bk2) = base_chart
                .locate(pi[b])
                .ok_or_else(|| Error::InvalidMesh("projection misses base boundary".into()))?;
            if bl != bl2 {
                return Err(Error::IncompatibleSampling("cover edge spans base loops".into()));
            }
            let bloop = &base_chart.loops[bl];
            let mb = bloop.nodes.len();
            let ds = if (bk + 1) % mb == bk2 {
                bloop.seg[bk]
            } else if (bk2 + 1) % mb == bk {
                bloop.seg[bk2]
            } else {
                return Err(Error::IncompatibleSampling(
                    "cover boundary edge does not project to a base edge".into(),
                ));
            };
            let lh = lhat[&edge_key(a, b)];
            let val = (ds / lh).ln();
            for &v in &[a, b] {
                let e = acc.entry(v).or_insert((0.0, 0));
                e.0 += val;
                e.1 += 1;
            }
        }
    }
    for (v, (sum, n)) in &acc {
        ulog[*v] = sum / *n as f64;
    }
    // interior: harmonic extension in the conformal structure (cotangent
    // weights of the shape lengths)
    let mut trip = Vec::new();
    for t in &cover.triangles {
        let l_opp = [
            lhat[&edge_key(t[1], t[2])],
            lhat[&edge_key(t[2], t[0])],
            lhat[&edge_key(t[0], t[1])],
        ];
        let s3 = stiffness_from_lengths(l_opp)?;
        for a in 0..3 {
            for b in 0..3 {
                trip.push((t[a], t[b], s3[a][b]));
            }
        }
    }
    let shape_stiff = SparseSym::from_triplets(nv, &trip);
    let boundary: Vec<usize> = acc.keys().copied().collect();
    let mut is_b = vec![false; nv];
    for &v in &boundary {
        is_b[v] = true;
    }
    let interior: Vec<usize> = (0..nv).filter(|&v| !is_b[v]).collect();
    if !interior.is_empty() {
        let sub = shape_stiff.submatrix(&interior);
        let factor = SkylineCholesky::new(&sub)?;
        let full = shape_stiff.mul_vec(&ulog);
        let rhs: Vec<f64> = interior.iter().map(|&v| -full[v]).collect();
        let x = factor.solve(&rhs);
        for (k, &v) in interior.iter().enumerate() {
            ulog[v] = x[k];
        }
    }
    // tau'-symmetrize the scale
    let mut sym = ulog.clone();
    for v in 0..nv {
        sym[v] = 0.5 * (ulog[v] + ulog[tau_prime[v]]);
    }
    let edge_lengths: BTreeMap<(usize, usize), f64> = lhat
        .iter()
        .map(|(&(a, b), &lh)| ((a, b), ((sym[a] + sym[b]) / 2.0).exp() * lh))
        .collect();
    Ok(RecoveredMetric {
        edge_lengths,
        log_scale: sym,
        min_chart_quality: min_quality,
    })
}

/// P1 element stiffness from intrinsic edge lengths (cotangent weights).
/// `l_opp[i]` is the length of the edge opposite corner i.
fn stiffness_from_lengths(l_opp: [f64; 3]) -> Result<[[f64; 3]; 3]> {
    let (a, b, c) = (l_opp[0], l_opp[1], l_opp[2]);
    let s = 0.5 * (a + b + c);
    let area2 = s * (s - a) * (s - b) * (s - c);
    if !(area2 > 0.0) {
        return Err(Error::Numerical(format!(
            "edge lengths ({a:.3e}, {b:.3e}, {c:.3e}) violate the triangle inequality"
        )));
    }
    let area = area2.sqrt();
    let mut m = [[0.0; 3]; 3];
    let ls = [a, b, c];
    for i in 0..3 {
        let (la, lb, lc) = (ls[i], ls[(i + 1) % 3], ls[(i + 2) % 3]);
        let cos = (lb * lb + lc * lc - la * la) / (2.0 * lb * lc);
        let sin = 2.0 * area / (lb * lc);
        let w = 0.5 * cos / sin;
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        m[j][j] += w;
        m[k][k] += w;
        m[j][k] -= w;
        m[k][j] -= w;
    }
    Ok(m)
}

/// SPD tensor in the triangle's reference frame matching three prescribed
/// edge g-lengths.
fn tensor_from_edge_lengths(frame: [[f64; 2]; 3], lens: [f64; 3]) -> Result<MetricTensor> {
    let e: [[f64; 2]; 3] = [
        [frame[1][0] - frame[0][0], frame[1][1] - frame[0][1]],
        [frame[2][0] - frame[1][0], frame[2][1] - frame[1][1]],
        [frame[0][0] - frame[2][0], frame[0][1] - frame[2][1]],
    ];
    let mut mat = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for i in 0..3 {
        mat[i][0] = e[i][0] * e[i][0];
        mat[i][1] = 2.0 * e[i][0] * e[i][1];
        mat[i][2] = e[i][1] * e[i][1];
        rhs[i] = lens[i] * lens[i];
    }
    let sol = solve3(mat, rhs)
        .ok_or_else(|| Error::Numerical("degenerate frame in tensor recovery".into()))?;
    let g = MetricTensor { a: sol[0], b: sol[1], c: sol[2] };
    if !g.is_spd() {
        return Err(Error::Numerical(format!(
            "recovered tensor not SPD: ({:.3e}, {:.3e}, {:.3e})",
            g.a, g.b, g.c
        )));
    }
    Ok(g)
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(&m);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut x = [0.0; 3];
    for i in 0..3 {
        let mut mm = m;
        for r in 0..3 {
            mm[r][i] = b[r];
        }
        x[i] = det3(&mm) / det;
    }
    Some(x)
}

/// The reconstructed Moebius band: quotient mesh with recovered metric,
/// pairing table and boundary identification with Gamma.
pub struct ReconstructedManifold {
    pub mesh: SurfaceMesh,
    /// tau' on cover vertices.
    pub pairing: Vec<usize>,
    /// For each position along the quotient's boundary loop, the flat
    /// position on the input boundary chart it is identified with.
    pub boundary_alignment: Vec<usize>,
    pub min_chart_quality: f64,
}

/// Quotient of the cover by tau' with the recovered metric.
pub fn build_quotient(
    cover: &SurfaceMesh,
    base_chart: &BoundaryChart,
    tau_prime: &[usize],
    rec: &RecoveredMetric,
) -> Result<ReconstructedManifold> {
    let nv = cover.vertex_count();
    let mut rep = vec![usize::MAX; nv];
    let mut reps = Vec::new();
    for v in 0..nv {
        if tau_prime[v] == v {
            return Err(Error::PairingFailed(format!("fixed point at {v}")));
        }
        if v < tau_prime[v] {
            rep[v] = reps.len();
            reps.push(v);
        }
    }
    for v in 0..nv {
        if rep[v] == usize::MAX {
            rep[v] = rep[tau_prime[v]];
        }
    }
    // tau' must map triangles to triangles; keep one triangle per orbit
    let mut tri_set: BTreeMap<[usize; 3], usize> = BTreeMap::new();
    for (ti, t) in cover.triangles.iter().enumerate() {
        let mut k = *t;
        k.sort_unstable();
        tri_set.insert(k, ti);
    }
    let mut seen: BTreeMap<[usize; 3], ()> = BTreeMap::new();
    let mut q_triangles = Vec::new();
    for t in &cover.triangles {
        let mut img = [tau_prime[t[0]], tau_prime[t[1]], tau_prime[t[2]]];
        img.sort_unstable();
        if !tri_set.contains_key(&img) {
            return Err(Error::PairingFailed("pairing is not triangle-compatible".into()));
        }
        let mut key = [rep[t[0]], rep[t[1]], rep[t[2]]];
        key.sort_unstable();
        if seen.insert(key, ()).is_some() {
            continue;
        }
        q_triangles.push([rep[t[0]], rep[t[1]], rep[t[2]]]);
    }
    let q_vertices: Vec<[f64; 3]> = reps.iter().map(|&v| cover.vertices[v]).collect();
    // recovered base edge lengths: average the two cover preimages
    let mut base_len: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for (&(a, b), &l) in &rec.edge_lengths {
        let key = edge_key(rep[a], rep[b]);
        let e = base_len.entry(key).or_insert((0.0, 0));
        e.0 += l;
        e.1 += 1;
    }
    let base_len: BTreeMap<(usize, usize), f64> =
        base_len.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let mut q_metric = Vec::with_capacity(q_triangles.len());
    for qt in &q_triangles {
        let frame = crate::mesh::triangle_frame([
            q_vertices[qt[0]],
            q_vertices[qt[1]],
            q_vertices[qt[2]],
        ]);
        let lens = [
            base_len[&edge_key(qt[0], qt[1])],
            base_len[&edge_key(qt[1], qt[2])],
            base_len[&edge_key(qt[2], qt[0])],
        ];
        q_metric.push(tensor_from_edge_lengths(frame, lens)?);
    }
    // boundary loop: image of Gamma'_+ (first cover loop), carrying the
    // identification with the input chart (Step 3 boundary attachment)
    let pi = cover.projection.as_ref().ok_or(Error::NotACover)?;
    let plus_loop = &cover.boundary_loops[0];
    let q_loop: Vec<usize> = plus_loop.iter().map(|&v| rep[v]).collect();
    let mut alignment = Vec::with_capacity(q_loop.len());
    for &v in plus_loop {
        let k = base_chart
            .flat_position(pi[v])
            .ok_or_else(|| Error::InvalidMesh("projection misses base boundary".into()))?;
        alignment.push(k);
    }
    let mesh = SurfaceMesh {
        vertices: q_vertices,
        triangles: q_triangles,
        metric: q_metric,
        boundary_loops: vec![q_loop],
        involution: None,
        projection: None,
    };
    mesh.validate()?;
    Ok(ReconstructedManifold {
        mesh,
        pairing: tau_prime.to_vec(),
        boundary_alignment: alignment,
        min_chart_quality: rec.min_chart_quality,
    })
}

/// Closing-loop comparison: DN operator of the reconstructed manifold
/// against the input, in the input's mass inner product.
#[derive(Debug, Clone)]
pub struct MismatchReport {
    /// Relative operator-norm mismatch |L' - L| / |L|.
    pub operator_rel: f64,
    /// Relative error of the lowest nonzero DN eigenvalue.
    pub lowest_eigenvalue_rel: f64,
    /// Relative errors of the 10 lowest nonzero eigenvalues.
    pub low_eigenvalues_rel: Vec<f64>,
    /// Relative boundary length mismatch.
    pub boundary_length_rel: f64,
}

pub fn verify_copy(rec: &ReconstructedManifold, input_dn: &DnOperator) -> Result<MismatchReport> {
    let solver = HarmonicSolver::new(&rec.mesh)?;
    let dn = assemble_dn(&rec.mesh, &solver)?;
    let nb = input_dn.boundary_dim();
    if dn.boundary_dim() != nb {
        return Err(Error::IncompatibleSampling(format!(
            "boundary node counts differ: {} vs {}",
            dn.boundary_dim(),
            nb
        )));
    }
    // express the reconstructed operator in the input chart ordering
    let mut perm = vec![usize::MAX; nb];
    for (q_pos, &in_pos) in rec.boundary_alignment.iter().enumerate() {
        perm[q_pos] = in_pos;
    }
    if perm.iter().any(|&p| p == usize::MAX) {
        return Err(Error::IncompatibleSampling("boundary alignment incomplete".into()));
    }
    let mut lam_aligned = nalgebra::DMatrix::zeros(nb, nb);
    for i in 0..nb {
        for j in 0..nb {
            lam_aligned[(perm[i], perm[j])] = dn.lambda[(i, j)];
        }
    }
    let diff = &lam_aligned - &input_dn.lambda;
    let op_in = operator_norm_m(&input_dn.lambda, &input_dn.mass)?;
    let op_diff = operator_norm_m(&diff, &input_dn.mass)?;
    let eig_in = dn_eigenvalues(input_dn, 11)?;
    let eig_rec = dn_eigenvalues(&dn, 11)?;
    let low: Vec<f64> = (1..11)
        .map(|i| (eig_rec[i] - eig_in[i]).abs() / eig_in[i].abs().max(1e-300))
        .collect();
    let len_in: f64 = input_dn.chart.total_length();
    let len_rec: f64 = dn.chart.total_length();
    Ok(MismatchReport {
        operator_rel: op_diff / op_in.max(1e-300),
        lowest_eigenvalue_rel: low[0],
        low_eigenvalues_rel: low,
        boundary_length_rel: (len_rec - len_in).abs() / len_in,
    })
}

/// Pipeline configuration for the end-to-end reconstruction.
#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    /// Number of trigonometric generator frequencies (2x this many
    /// Hermitian elements).
    pub generator_count: usize,
    /// Denominator exclusion threshold of the observer formula.
    pub theta: f64,
    pub shilov_band: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            generator_count: 8,
            theta: crate::traces::DEFAULT_DENOMINATOR_THETA,
            shilov_band: SHILOV_BAND,
        }
    }
}

/// Everything the closing-loop run produces, including the oracle-side
/// verification statistics.
pub struct PipelineResult {
    pub base_dn: DnOperator,
    pub cover: SurfaceMesh,
    pub embedding: SpectrumEmbedding,
    pub shilov: ShilovReport,
    /// Detected Shilov set is contained in the true boundary vertex set.
    pub shilov_contained: bool,
    /// Fraction of true boundary vertices detected.
    pub shilov_coverage: f64,
    pub pairing_stats: PairingStats,
    /// Fraction of vertices where tau' agrees with the oracle deck map.
    pub pairing_agreement: f64,
    pub recovered: RecoveredMetric,
    pub reconstructed: ReconstructedManifold,
    pub mismatch: MismatchReport,
}

/// Run the full reconstruction on a non-orientable base mesh and close the
/// loop against its DN operator.
pub fn run_pipeline(base: &SurfaceMesh, cfg: &PipelineConfig) -> Result<PipelineResult> {
    let base_solver = HarmonicSolver::new(base)?;
    let base_dn = assemble_dn(base, &base_solver)?;
    let cover = crate::cover::build_double_cover(base)?;
    let cover_chart = crate::cover::labeled_chart(&cover)?;
    let cover_solver = HarmonicSolver::with_chart(&cover, cover_chart.clone())?;
    let (gens, tags) = trig_generators(&base_dn, cfg.generator_count, cfg.theta)?;
    let emb = embed_spectrum(&gens, &tags, &cover, &cover_solver, &base_dn.chart)?;
    let probes = default_probes(&emb, &base_dn.chart);
    let shilov = shilov_boundary(&emb, &probes, cfg.shilov_band)?;
    let is_boundary = cover.boundary_vertex_set();
    let shilov_contained = shilov.detected.iter().all(|&v| is_boundary[v]);
    let boundary_total = is_boundary.iter().filter(|&&b| b).count();
    let detected_boundary = shilov.detected.iter().filter(|&&v| is_boundary[v]).count();
    let shilov_coverage = detected_boundary as f64 / boundary_total.max(1) as f64;
    let (tau_prime, pairing_stats) = pair_involution(&emb)?;
    let oracle_tau = cover.involution.as_ref().ok_or(Error::NotACover)?;
    let agree = tau_prime
        .iter()
        .zip(oracle_tau)
        .filter(|(a, b)| a == b)
        .count();
    let pairing_agreement = agree as f64 / tau_prime.len() as f64;
    let recovered = recover_metric(&cover, &cover_chart, &emb, &base_dn.chart, &tau_prime)?;
    let reconstructed = build_quotient(&cover, &base_dn.chart, &tau_prime, &recovered)?;
    let mismatch = verify_copy(&reconstructed, &base_dn)?;
    Ok(PipelineResult {
        base_dn,
        cover,
        embedding: emb,
        shilov,
        shilov_contained,
        shilov_coverage,
        pairing_stats,
        pairing_agreement,
        recovered,
        reconstructed,
        mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_recovery_roundtrip() {
        let frame = [[0.0, 0.0], [1.3, 0.0], [0.4, 0.9]];
        let g = MetricTensor { a: 1.7, b: 0.2, c: 0.8 };
        let e = [
            [frame[1][0] - frame[0][0], frame[1][1] - frame[0][1]],
            [frame[2][0] - frame[1][0], frame[2][1] - frame[1][1]],
            [frame[0][0] - frame[2][0], frame[0][1] - frame[2][1]],
        ];
        let lens = [g.norm(e[0]), g.norm(e[1]), g.norm(e[2])];
        let back = tensor_from_edge_lengths(frame, lens).unwrap();
        assert!((back.a - g.a).abs() < 1e-12);
        assert!((back.b - g.b).abs() < 1e-12);
        assert!((back.c - g.c).abs() < 1e-12);
    }

    #[test]
    fn cotan_stiffness_from_lengths_matches_flat_formula() {
        // right triangle with legs 1, 1: cot at the right angle is 0
        let s = stiffness_from_lengths([2.0f64.sqrt(), 1.0, 1.0]).unwrap();
        assert!(s[1][2].abs() < 1e-12);
        assert!((s[0][1] + 0.5).abs() < 1e-12);
        assert!((s[0][2] + 0.5).abs() < 1e-12);
        for i in 0..3 {
            let sum: f64 = (0..3).map(|j| s[i][j]).sum();
            assert!(sum.abs() < 1e-12);
        }
        assert!(stiffness_from_lengths([1.0, 1.0, 3.0]).is_err());
    }
}

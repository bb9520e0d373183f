//! Orientation double cover of a non-orientable mesh, its deck involution,
//! and transfer of functions between base and cover.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::boundary::TraceFunction;
use crate::mesh::{BoundaryChart, SurfaceMesh};
use crate::{Error, Result};

/// Double cover of a non-orientable surface with one boundary loop.
///
/// Built as the orientation double cover: two oriented copies of every
/// triangle, glued compatibly across edges. For the structured Moebius
/// quotient this reproduces the structured cylinder exactly (same
/// per-triangle frames and copied metric tensors), so base/cover transfers
/// are exact index maps.
pub fn build_double_cover(base: &SurfaceMesh) -> Result<SurfaceMesh> {
    if base.global_orientation().is_ok() {
        return Err(Error::CoverOfOrientable);
    }
    if base.boundary_loops.len() != 1 {
        return Err(Error::InvalidMesh(format!(
            "double cover expects 1 boundary loop, found {}",
            base.boundary_loops.len()
        )));
    }
    let nt = base.triangles.len();
    let nv = base.vertices.len();
    let edge_tris = base.edge_triangles();

    // Oriented triangle (t, s) with s in {0,1}; s = 0 keeps the stored order.
    // Union-find over corners (t, s, corner) is overkill: cover vertices are
    // connected components of the corner graph around each base vertex.
    // corner id = (t * 2 + s) * 3 + k
    let cid = |t: usize, s: usize, k: usize| (t * 2 + s) * 3 + k;
    let mut parent: Vec<usize> = (0..nt * 6).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    fn union(parent: &mut Vec<usize>, a: usize, b: usize) {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }

    // glue oriented triangles across interior edges
    for (key, ts) in &edge_tris {
        if ts.len() != 2 {
            continue;
        }
        let (t1, t2) = (ts[0], ts[1]);
        let dir = |t: usize| -> bool {
            // true if edge (key.0 -> key.1) appears in stored order of t
            let tri = base.triangles[t];
            (0..3).any(|m| tri[m] == key.0 && tri[(m + 1) % 3] == key.1)
        };
        // oriented copies are compatible when the shared edge is traversed in
        // opposite directions
        let same_sheet_compatible = dir(t1) != dir(t2);
        let corner_of = |t: usize, v: usize| -> usize {
            base.triangles[t].iter().position(|&x| x == v).unwrap()
        };
        for s1 in 0..2 {
            // sheet of t2 glued to (t1, s1)
            let s2 = if same_sheet_compatible { s1 } else { 1 - s1 };
            for &v in &[key.0, key.1] {
                union(
                    &mut parent,
                    cid(t1, s1, corner_of(t1, v)),
                    cid(t2, s2, corner_of(t2, v)),
                );
            }
        }
    }

    // cover vertices = corner components
    let mut comp_id: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cover_vertices = Vec::new();
    let mut projection = Vec::new();
    let mut rep_corner = Vec::new();
    for t in 0..nt {
        for s in 0..2 {
            for k in 0..3 {
                let root = find(&mut parent, cid(t, s, k));
                if !comp_id.contains_key(&root) {
                    let id = cover_vertices.len();
                    comp_id.insert(root, id);
                    let bv = base.triangles[t][k];
                    cover_vertices.push(base.vertices[bv]);
                    projection.push(bv);
                    rep_corner.push((t, s, k));
                }
            }
        }
    }
    // each base vertex must have exactly two preimages
    let mut fiber = vec![0usize; nv];
    for &bv in &projection {
        fiber[bv] += 1;
    }
    if fiber.iter().any(|&c| c != 2) {
        return Err(Error::CoverOfOrientable);
    }

    let mut cover_triangles = Vec::with_capacity(2 * nt);
    let mut cover_metric = Vec::with_capacity(2 * nt);
    let mut oriented_of = vec![[0usize; 2]; nt]; // cover triangle index per (t, s)
    for t in 0..nt {
        for s in 0..2 {
            let vs: Vec<usize> = (0..3)
                .map(|k| comp_id[&find(&mut parent, cid(t, s, k))])
                .collect();
            oriented_of[t][s] = cover_triangles.len();
            cover_triangles.push([vs[0], vs[1], vs[2]]);
            cover_metric.push(base.metric[t]);
        }
    }

    // deck involution: swap sheets
    let mut tau = vec![usize::MAX; cover_vertices.len()];
    for (cv, &(t, s, k)) in rep_corner.iter().enumerate() {
        let other = comp_id[&find(&mut parent, cid(t, 1 - s, k))];
        tau[cv] = other;
    }
    if tau.iter().enumerate().any(|(v, &w)| w == v) {
        return Err(Error::CoverOfOrientable);
    }

    let mut cover = SurfaceMesh {
        vertices: cover_vertices,
        triangles: cover_triangles,
        metric: cover_metric,
        boundary_loops: Vec::new(),
        involution: Some(tau),
        projection: Some(projection),
    };
    // boundary loops along gamma = Phi nu for the propagated orientation
    let signs = cover
        .global_orientation()
        .map_err(|_| Error::InvalidMesh("orientation cover is not orientable".into()))?;
    let mut loops = cover.oriented_boundary_loops(&signs)?;
    if loops.len() != 2 {
        return Err(Error::InvalidMesh(format!(
            "double cover boundary has {} loops, expected 2",
            loops.len()
        )));
    }
    // Gamma_+ is the loop whose projection runs along the stored base loop
    // direction; put it first.
    let base_loop = &base.boundary_loops[0];
    let base_next: BTreeMap<usize, usize> = (0..base_loop.len())
        .map(|k| (base_loop[k], base_loop[(k + 1) % base_loop.len()]))
        .collect();
    let pi = cover.projection.as_ref().unwrap();
    let runs_forward = |l: &Vec<usize>| -> bool {
        base_next.get(&pi[l[0]]) == Some(&pi[l[1]])
    };
    let forward0 = runs_forward(&loops[0]);
    let forward1 = runs_forward(&loops[1]);
    if forward0 == forward1 {
        return Err(Error::InvalidMesh(
            "cover loops do not project to opposite boundary directions".into(),
        ));
    }
    if forward1 {
        loops.swap(0, 1);
    }
    // rotate Gamma_+ to start over the base loop's first node
    let start = loops[0].iter().position(|&v| pi[v] == base_loop[0]).unwrap_or(0);
    loops[0].rotate_left(start);
    let start = loops[1].iter().position(|&v| pi[v] == base_loop[0]).unwrap_or(0);
    loops[1].rotate_left(start);
    cover.boundary_loops = loops;
    cover.validate()?;
    Ok(cover)
}

/// Chart of a cover with sigma labels assigned: +1 on the first loop
/// (Gamma_+), -1 on the second.
pub fn labeled_chart(cover: &SurfaceMesh) -> Result<BoundaryChart> {
    if cover.involution.is_none() || cover.boundary_loops.len() != 2 {
        return Err(Error::NotACover);
    }
    let mut chart = cover.boundary_chart()?;
    chart.loops[0].sigma = 1;
    chart.loops[1].sigma = -1;
    // the involution must exchange the two loops
    let tau = cover.involution.as_ref().unwrap();
    for &v in &chart.loops[0].nodes {
        if chart.loops[1].nodes.iter().all(|&w| w != tau[v]) {
            return Err(Error::NotACover);
        }
    }
    Ok(chart)
}

/// Even lift of a base vertex function: (lift f)(x) = f(pi(x)).
pub fn lift_even(cover: &SurfaceMesh, f_base: &[f64]) -> Result<Vec<f64>> {
    let pi = cover.projection.as_ref().ok_or(Error::NotACover)?;
    if f_base.len() != pi.iter().copied().max().map_or(0, |m| m + 1)
        && f_base.len() < pi.iter().copied().max().unwrap_or(0) + 1
    {
        return Err(Error::InvalidMesh("lift input length mismatch".into()));
    }
    Ok(pi.iter().map(|&bv| f_base[bv]).collect())
}

/// Push a tau-even cover function down to the base. Errors (reporting the
/// maximum parity defect) when the input is not even within `tol`.
pub fn push_even(cover: &SurfaceMesh, f_cover: &[f64], tol: f64) -> Result<Vec<f64>> {
    let pi = cover.projection.as_ref().ok_or(Error::NotACover)?;
    let tau = cover.involution.as_ref().ok_or(Error::NotACover)?;
    let scale = f_cover.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut defect = 0.0f64;
    for v in 0..f_cover.len() {
        defect = defect.max((f_cover[v] - f_cover[tau[v]]).abs());
    }
    if defect > tol * scale {
        return Err(Error::ParityDefect(defect / scale));
    }
    let nb = pi.iter().copied().max().unwrap_or(0) + 1;
    let mut out = vec![0.0; nb];
    for v in 0..f_cover.len() {
        out[pi[v]] = 0.5 * (f_cover[v] + f_cover[tau[v]]);
    }
    Ok(out)
}

/// Even lift of a base boundary trace onto the cover boundary:
/// (lift f)(x) = f(pi(x)).
pub fn lift_boundary_trace(
    cover: &SurfaceMesh,
    cover_chart: &BoundaryChart,
    base_chart: &BoundaryChart,
    f: &TraceFunction,
) -> Result<TraceFunction> {
    let pi = cover.projection.as_ref().ok_or(Error::NotACover)?;
    let flat = f.flatten();
    let mut loops = Vec::with_capacity(cover_chart.loops.len());
    for l in &cover_chart.loops {
        let mut vals = Vec::with_capacity(l.nodes.len());
        for &x in &l.nodes {
            let k = base_chart
                .flat_position(pi[x])
                .ok_or_else(|| Error::InvalidMesh("projection misses base boundary".into()))?;
            vals.push(flat[k]);
        }
        loops.push(vals);
    }
    Ok(TraceFunction { loops })
}

/// Fold a tau-odd boundary trace to the base: returns q on the base chart
/// such that the input equals sigma * (q o pi).
pub fn fold_odd_trace(
    cover: &SurfaceMesh,
    cover_chart: &BoundaryChart,
    base_chart: &BoundaryChart,
    f: &TraceFunction,
    tol: f64,
) -> Result<TraceFunction> {
    let pi = cover.projection.as_ref().ok_or(Error::NotACover)?;
    let tau = cover.involution.as_ref().ok_or(Error::NotACover)?;
    // parity check: f(tau x) = -f(x)
    let scale = f.max_abs().max(1e-300);
    let mut defect = 0.0f64;
    for l in &cover_chart.loops {
        for &v in &l.nodes {
            let (li, k) = cover_chart.locate(v).unwrap();
            let (lj, m) = cover_chart
                .locate(tau[v])
                .ok_or_else(|| Error::InvalidMesh("involution leaves the boundary".into()))?;
            let a = f.loops[li][k];
            let b = f.loops[lj][m];
            defect = defect.max((a + b).norm());
        }
    }
    if defect > tol * scale {
        return Err(Error::ParityDefect(defect / scale));
    }
    let mut out: Vec<Vec<num_complex::Complex64>> = base_chart
        .loops
        .iter()
        .map(|l| vec![num_complex::Complex64::new(0.0, 0.0); l.nodes.len()])
        .collect();
    for (li, l) in cover_chart.loops.iter().enumerate() {
        let sigma = f64::from(l.sigma);
        for (k, &v) in l.nodes.iter().enumerate() {
            let (bl, bk) = base_chart
                .locate(pi[v])
                .ok_or_else(|| Error::InvalidMesh("projection misses base boundary".into()))?;
            out[bl][bk] = f.loops[li][k] * sigma;
        }
    }
    Ok(TraceFunction { loops: out })
}

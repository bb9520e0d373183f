//! Triangulated surfaces with per-triangle metric tensors, boundary charts
//! and (for double covers) deck involutions.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float; // float math under no_std

use crate::{Error, Result};

/// Symmetric positive-definite 2x2 tensor `[[a, b], [b, c]]`, expressed in a
/// triangle's local reference frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTensor {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl MetricTensor {
    pub const IDENTITY: MetricTensor = MetricTensor { a: 1.0, b: 0.0, c: 1.0 };

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn is_spd(&self) -> bool {
        self.a > 0.0 && self.det() > 0.0
    }

    /// g-inner product of two frame vectors.
    pub fn dot(&self, u: [f64; 2], v: [f64; 2]) -> f64 {
        self.a * u[0] * v[0] + self.b * (u[0] * v[1] + u[1] * v[0]) + self.c * u[1] * v[1]
    }

    pub fn norm(&self, u: [f64; 2]) -> f64 {
        self.dot(u, u).sqrt()
    }

    pub fn inverse(&self) -> MetricTensor {
        let d = self.det();
        MetricTensor { a: self.c / d, b: -self.b / d, c: self.a / d }
    }
}

/// Triangulated 2-manifold with boundary. Vertices carry reference
/// coordinates whose only job is to induce a non-degenerate affine frame on
/// each triangle; all geometry lives in the per-triangle metric tensors.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    /// Per-triangle metric in the triangle's reference frame.
    pub metric: Vec<MetricTensor>,
    /// Ordered vertex cycles; see `BoundaryChart` for the orientation
    /// convention.
    pub boundary_loops: Vec<Vec<usize>>,
    /// Deck involution of a double cover (vertex permutation).
    pub involution: Option<Vec<usize>>,
    /// Covering projection onto the base mesh (vertex map).
    pub projection: Option<Vec<usize>>,
}

/// Local frame of a triangle: coordinates of the three vertices in an
/// orthonormal 2-D frame spanned by the triangle's reference plane.
pub fn triangle_frame(vs: [[f64; 3]; 3]) -> [[f64; 2]; 3] {
    let e1 = sub3(vs[1], vs[0]);
    let e2 = sub3(vs[2], vs[0]);
    let l1 = norm3(e1);
    let x_hat = scale3(e1, 1.0 / l1);
    let mut p = sub3(e2, scale3(x_hat, dot3(e2, x_hat)));
    let lp = norm3(p);
    p = scale3(p, 1.0 / lp);
    [[0.0, 0.0], [l1, 0.0], [dot3(e2, x_hat), dot3(e2, p)]]
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}
fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Canonical undirected edge key.
pub fn edge_key(i: usize, j: usize) -> (usize, usize) {
    if i < j { (i, j) } else { (j, i) }
}

impl SurfaceMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = BTreeMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                edges.insert(edge_key(t[k], t[(k + 1) % 3]), ());
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Frame coordinates of triangle `t`'s vertices.
    pub fn frame(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        triangle_frame([
            self.vertices[tri[0]],
            self.vertices[tri[1]],
            self.vertices[tri[2]],
        ])
    }

    /// g-length of the triangle-`t` edge from local corner `k` to `k+1`.
    pub fn edge_g_length(&self, t: usize, k: usize) -> f64 {
        let f = self.frame(t);
        let u = [f[(k + 1) % 3][0] - f[k][0], f[(k + 1) % 3][1] - f[k][1]];
        self.metric[t].norm(u)
    }

    /// g-area of triangle `t`.
    pub fn g_area(&self, t: usize) -> f64 {
        let f = self.frame(t);
        let e1 = [f[1][0] - f[0][0], f[1][1] - f[0][1]];
        let e2 = [f[2][0] - f[0][0], f[2][1] - f[0][1]];
        let ref_area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        ref_area * self.metric[t].det().sqrt()
    }

    /// Map undirected edge -> adjacent triangle indices (1 for boundary, 2
    /// for interior).
    pub fn edge_triangles(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(t[k], t[(k + 1) % 3])).or_default().push(ti);
            }
        }
        map
    }

    /// Vertices lying on some boundary loop.
    pub fn boundary_vertex_set(&self) -> Vec<bool> {
        let mut b = vec![false; self.vertices.len()];
        for l in &self.boundary_loops {
            for &v in l {
                b[v] = true;
            }
        }
        b
    }

    /// Greedy propagation of a consistent triangle orientation. Returns
    /// per-triangle signs (+1 keeps the stored vertex order) or an error
    /// describing the contradiction for non-orientable meshes.
    pub fn global_orientation(&self) -> Result<Vec<i8>> {
        let nt = self.triangles.len();
        let mut sign = vec![0i8; nt];
        let edge_tris = self.edge_triangles();
        // adjacency with shared-edge direction comparison
        let mut stack = Vec::new();
        for start in 0..nt {
            if sign[start] != 0 {
                continue;
            }
            sign[start] = 1;
            stack.push(start);
            while let Some(t) = stack.pop() {
                let tri = self.triangles[t];
                for k in 0..3 {
                    let (a, b) = (tri[k], tri[(k + 1) % 3]);
                    for &u in &edge_tris[&edge_key(a, b)] {
                        if u == t {
                            continue;
                        }
                        // direction of (a,b) inside u
                        let utr = self.triangles[u];
                        let mut same_dir = false;
                        for m in 0..3 {
                            if utr[m] == a && utr[(m + 1) % 3] == b {
                                same_dir = true;
                            }
                        }
                        // consistent orientation wants opposite directions
                        let want = if same_dir { -sign[t] } else { sign[t] };
                        if sign[u] == 0 {
                            sign[u] = want;
                            stack.push(u);
                        } else if sign[u] != want {
                            return Err(Error::NotOrientable(format!(
                                "orientation contradiction at triangles {t} and {u}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(sign)
    }

    /// Ordered boundary loops traversed with the surface on the left, i.e.
    /// along gamma = Phi nu for the orientation `signs`. Only meaningful for
    /// orientable meshes.
    pub fn oriented_boundary_loops(&self, signs: &[i8]) -> Result<Vec<Vec<usize>>> {
        let edge_tris = self.edge_triangles();
        // directed boundary edges in positively-oriented triangle order
        let mut succ: BTreeMap<usize, usize> = BTreeMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if edge_tris[&edge_key(a, b)].len() == 1 {
                    let (from, to) = if signs[ti] > 0 { (a, b) } else { (b, a) };
                    if succ.insert(from, to).is_some() {
                        return Err(Error::InvalidMesh(format!(
                            "boundary is not a union of simple cycles near vertex {from}"
                        )));
                    }
                }
            }
        }
        let mut loops = Vec::new();
        let mut used: BTreeMap<usize, bool> = BTreeMap::new();
        let starts: Vec<usize> = succ.keys().copied().collect();
        for s in starts {
            if used.contains_key(&s) {
                continue;
            }
            let mut cycle = vec![s];
            used.insert(s, true);
            let mut cur = succ[&s];
            while cur != s {
                used.insert(cur, true);
                cycle.push(cur);
                cur = succ[&cur];
            }
            loops.push(cycle);
        }
        Ok(loops)
    }

    /// Structural validation of all advertised invariants.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if self.metric.len() != self.triangles.len() {
            return Err(Error::InvalidMesh("metric count != triangle count".into()));
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidMesh(format!("degenerate triangle {i}")));
            }
            for &v in t {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!("vertex index out of range in triangle {i}")));
                }
            }
            if !self.metric[i].is_spd() {
                return Err(Error::InvalidMesh(format!("metric of triangle {i} not SPD")));
            }
            let f = self.frame(i);
            let e1 = [f[1][0], f[1][1]];
            let e2 = [f[2][0], f[2][1]];
            let det = e1[0] * e2[1] - e1[1] * e2[0];
            if det.abs() < 1e-300 || !det.is_finite() {
                return Err(Error::InvalidMesh(format!("degenerate reference frame in triangle {i}")));
            }
        }
        // boundary loops are simple cycles of boundary edges
        let edge_tris = self.edge_triangles();
        for (li, l) in self.boundary_loops.iter().enumerate() {
            if l.len() < 3 {
                return Err(Error::LoopTooShort(l.len()));
            }
            let mut seen = vec![false; nv];
            for k in 0..l.len() {
                let (a, b) = (l[k], l[(k + 1) % l.len()]);
                if seen[a] {
                    return Err(Error::InvalidMesh(format!("loop {li} revisits vertex {a}")));
                }
                seen[a] = true;
                match edge_tris.get(&edge_key(a, b)) {
                    Some(ts) if ts.len() == 1 => {}
                    _ => {
                        return Err(Error::InvalidMesh(format!(
                            "loop {li} edge ({a},{b}) is not a boundary edge"
                        )))
                    }
                }
            }
        }
        if let Some(tau) = &self.involution {
            if tau.len() != nv {
                return Err(Error::InvalidMesh("involution length mismatch".into()));
            }
            for v in 0..nv {
                if tau[v] >= nv || tau[tau[v]] != v {
                    return Err(Error::InvalidMesh(format!("involution not involutive at {v}")));
                }
                if tau[v] == v {
                    return Err(Error::InvalidMesh(format!("involution fixes vertex {v}")));
                }
            }
            // triangles map to triangles with tau-invariant metric
            let mut tri_index: BTreeMap<[usize; 3], usize> = BTreeMap::new();
            for (i, t) in self.triangles.iter().enumerate() {
                let mut k = *t;
                k.sort_unstable();
                tri_index.insert(k, i);
            }
            for (i, t) in self.triangles.iter().enumerate() {
                let mut img = [tau[t[0]], tau[t[1]], tau[t[2]]];
                img.sort_unstable();
                match tri_index.get(&img) {
                    None => {
                        return Err(Error::InvalidMesh(format!(
                            "involution does not map triangle {i} to a triangle"
                        )))
                    }
                    Some(&j) => {
                        let (gi, gj) = (self.metric[i], self.metric[j]);
                        // compare intrinsically via edge lengths
                        for k in 0..3 {
                            let li = self.edge_g_length(i, k);
                            let e = (self.triangles[i][k], self.triangles[i][(k + 1) % 3]);
                            let (ia, ib) = (tau[e.0], tau[e.1]);
                            let mut found = false;
                            for m in 0..3 {
                                let ej = (self.triangles[j][m], self.triangles[j][(m + 1) % 3]);
                                if edge_key(ej.0, ej.1) == edge_key(ia, ib) {
                                    let lj = self.edge_g_length(j, m);
                                    if (li - lj).abs() > 1e-9 * (1.0 + li.abs()) {
                                        return Err(Error::InvalidMesh(format!(
                                            "metric not involution-invariant on triangles {i},{j}"
                                        )));
                                    }
                                    found = true;
                                }
                            }
                            if !found {
                                return Err(Error::InvalidMesh(format!(
                                    "involution image of edge missing in triangle {j}"
                                )));
                            }
                        }
                        let _ = (gi, gj);
                    }
                }
            }
        }
        if let Some(pi) = &self.projection {
            if pi.len() != nv {
                return Err(Error::InvalidMesh("projection length mismatch".into()));
            }
            if let Some(tau) = &self.involution {
                let mut fiber: BTreeMap<usize, usize> = BTreeMap::new();
                for v in 0..nv {
                    if pi[tau[v]] != pi[v] {
                        return Err(Error::InvalidMesh(format!("projection not tau-invariant at {v}")));
                    }
                    *fiber.entry(pi[v]).or_insert(0) += 1;
                }
                if fiber.values().any(|&c| c != 2) {
                    return Err(Error::InvalidMesh("projection is not 2-to-1".into()));
                }
            }
        }
        Ok(())
    }

    /// Boundary chart with cumulative g-arc-lengths along each stored loop.
    pub fn boundary_chart(&self) -> Result<BoundaryChart> {
        // edge -> (triangle, corner) for boundary length lookup
        let mut edge_owner: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
        let edge_tris = self.edge_triangles();
        for (ti, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let key = edge_key(t[k], t[(k + 1) % 3]);
                if edge_tris[&key].len() == 1 {
                    edge_owner.insert(key, (ti, k));
                }
            }
        }
        let mut loops = Vec::new();
        for l in &self.boundary_loops {
            let m = l.len();
            if m < 3 {
                return Err(Error::LoopTooShort(m));
            }
            let mut arc = vec![0.0; m];
            let mut total = 0.0;
            let mut seg = vec![0.0; m];
            for k in 0..m {
                let key = edge_key(l[k], l[(k + 1) % m]);
                let (ti, corner) = *edge_owner
                    .get(&key)
                    .ok_or_else(|| Error::InvalidMesh("loop edge is not a boundary edge".into()))?;
                let len = self.edge_g_length(ti, corner);
                seg[k] = len;
                arc[k] = total;
                total += len;
            }
            loops.push(ChartLoop {
                nodes: l.clone(),
                arc,
                seg,
                total,
                sigma: 0,
            });
        }
        Ok(BoundaryChart::new(loops))
    }
}

/// One boundary loop of a chart: ordered nodes, cumulative arc-length,
/// per-edge segment lengths and the sigma label (for double covers).
#[derive(Debug, Clone)]
pub struct ChartLoop {
    pub nodes: Vec<usize>,
    /// Arc-length coordinate of each node (arc[0] = 0).
    pub arc: Vec<f64>,
    /// Length of the edge from node k to node k+1 (wrapping).
    pub seg: Vec<f64>,
    pub total: f64,
    /// +1 on Gamma_+, -1 on Gamma_-, 0 when not a labeled cover loop.
    pub sigma: i8,
}

/// Ordered boundary cycles with arc-length coordinates. Loops are stored in
/// the direction of the boundary orientation field gamma; on oriented meshes
/// this is the traversal with the surface on the left (gamma = Phi nu).
#[derive(Debug, Clone)]
pub struct BoundaryChart {
    pub loops: Vec<ChartLoop>,
    index: BTreeMap<usize, (usize, usize)>,
}

impl BoundaryChart {
    pub fn new(loops: Vec<ChartLoop>) -> Self {
        let mut index = BTreeMap::new();
        for (li, l) in loops.iter().enumerate() {
            for (k, &v) in l.nodes.iter().enumerate() {
                index.insert(v, (li, k));
            }
        }
        BoundaryChart { loops, index }
    }

    pub fn loop_count(&self) -> usize {
        self.loops.len()
    }

    pub fn node_count(&self) -> usize {
        self.loops.iter().map(|l| l.nodes.len()).sum()
    }

    /// All boundary nodes in chart order (loop by loop).
    pub fn nodes(&self) -> Vec<usize> {
        self.loops.iter().flat_map(|l| l.nodes.iter().copied()).collect()
    }

    /// (loop index, position) of a boundary vertex.
    pub fn locate(&self, vertex: usize) -> Option<(usize, usize)> {
        self.index.get(&vertex).copied()
    }

    /// Flat chart position (over concatenated loops) of a boundary vertex.
    pub fn flat_position(&self, vertex: usize) -> Option<usize> {
        let (li, k) = self.locate(vertex)?;
        let off: usize = self.loops[..li].iter().map(|l| l.nodes.len()).sum();
        Some(off + k)
    }

    pub fn total_length(&self) -> f64 {
        self.loops.iter().map(|l| l.total).sum()
    }

    /// Consistent (cyclic-tridiagonal) mass matrix of one loop.
    pub fn loop_mass(&self, li: usize) -> nalgebra::DMatrix<f64> {
        let l = &self.loops[li];
        let m = l.nodes.len();
        let mut mm = nalgebra::DMatrix::zeros(m, m);
        for k in 0..m {
            let len = l.seg[k];
            let kp = (k + 1) % m;
            mm[(k, k)] += len / 3.0;
            mm[(kp, kp)] += len / 3.0;
            mm[(k, kp)] += len / 6.0;
            mm[(kp, k)] += len / 6.0;
        }
        mm
    }

    /// Block-diagonal mass over all loops, in chart order.
    pub fn mass(&self) -> nalgebra::DMatrix<f64> {
        let n = self.node_count();
        let mut mm = nalgebra::DMatrix::zeros(n, n);
        let mut off = 0;
        for li in 0..self.loops.len() {
            let bl = self.loop_mass(li);
            let m = bl.nrows();
            mm.view_mut((off, off), (m, m)).copy_from(&bl);
            off += m;
        }
        mm
    }

    /// Mass-weighted nodal weights (row sums of the mass matrix).
    pub fn quadrature_weights(&self, li: usize) -> Vec<f64> {
        let l = &self.loops[li];
        let m = l.nodes.len();
        let mut w = vec![0.0; m];
        for k in 0..m {
            let len = l.seg[k];
            w[k] += len / 2.0;
            w[(k + 1) % m] += len / 2.0;
        }
        w
    }
}

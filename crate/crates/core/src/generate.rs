//! Parametric test surfaces: disk, annulus, flat cylinder, flat Moebius band
//! (as an exact quotient of a structured cylinder grid) and an embedded
//! Moebius band with the induced metric of the standard ruled embedding.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float; // float math under no_std

use crate::mesh::{triangle_frame, MetricTensor, SurfaceMesh};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    Disk,
    Annulus,
    FlatCylinder,
    FlatMoebius,
    EmbeddedMoebius,
}

/// Shape parameters plus target mesh spacing `h`. Fields are read per kind:
/// `radius` for the disk, `inner_radius`/`outer_radius` for the annulus,
/// `length` (circumference) and `half_width` for the cylinder and both
/// Moebius variants, `center_radius` for the embedded band.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceParams {
    pub h: f64,
    pub radius: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub length: f64,
    pub half_width: f64,
    pub center_radius: f64,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        SurfaceParams {
            h: 0.1,
            radius: 1.0,
            inner_radius: 0.5,
            outer_radius: 1.0,
            length: core::f64::consts::TAU,
            half_width: 1.0,
            center_radius: 1.0,
        }
    }
}

pub fn generate_surface(kind: SurfaceKind, params: &SurfaceParams) -> Result<SurfaceMesh> {
    if !(params.h > 0.0) {
        return Err(Error::DegenerateParameter("mesh spacing h must be positive".into()));
    }
    let mesh = match kind {
        SurfaceKind::Disk => disk(params)?,
        SurfaceKind::Annulus => annulus(params)?,
        SurfaceKind::FlatCylinder => flat_cylinder(params)?,
        SurfaceKind::FlatMoebius => moebius(params, false)?,
        SurfaceKind::EmbeddedMoebius => moebius(params, true)?,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Tensor in the triangle's reference frame that reproduces the metric
/// `g_param` given in parameter coordinates: G = B^T g_param B with B the
/// affine map from frame coordinates to parameters.
fn tensor_from_params(
    frame: [[f64; 2]; 3],
    params: [[f64; 2]; 3],
    g_param: MetricTensor,
) -> MetricTensor {
    let x1 = [frame[1][0] - frame[0][0], frame[1][1] - frame[0][1]];
    let x2 = [frame[2][0] - frame[0][0], frame[2][1] - frame[0][1]];
    let p1 = [params[1][0] - params[0][0], params[1][1] - params[0][1]];
    let p2 = [params[2][0] - params[0][0], params[2][1] - params[0][1]];
    let det = x1[0] * x2[1] - x1[1] * x2[0];
    // B = P X^{-1}
    let b00 = (p1[0] * x2[1] - p2[0] * x1[1]) / det;
    let b01 = (-p1[0] * x2[0] + p2[0] * x1[0]) / det;
    let b10 = (p1[1] * x2[1] - p2[1] * x1[1]) / det;
    let b11 = (-p1[1] * x2[0] + p2[1] * x1[0]) / det;
    // G = B^T g B
    let (ga, gb, gc) = (g_param.a, g_param.b, g_param.c);
    let c00 = ga * b00 + gb * b10;
    let c01 = ga * b01 + gb * b11;
    let c10 = gb * b00 + gc * b10;
    let c11 = gb * b01 + gc * b11;
    MetricTensor {
        a: b00 * c00 + b10 * c10,
        b: b00 * c01 + b10 * c11,
        c: b01 * c01 + b11 * c11,
    }
}

fn disk(p: &SurfaceParams) -> Result<SurfaceMesh> {
    if !(p.radius > 0.0) {
        return Err(Error::DegenerateParameter(format!("disk radius {} must be positive", p.radius)));
    }
    let rings = ((p.radius / p.h).round() as usize).max(2);
    let mut vertices = vec![[0.0, 0.0, 0.0]];
    let mut ring_start = vec![0usize];
    for k in 1..=rings {
        let nk = 6 * k;
        ring_start.push(vertices.len());
        let r = p.radius * k as f64 / rings as f64;
        for j in 0..nk {
            let th = core::f64::consts::TAU * j as f64 / nk as f64;
            vertices.push([r * th.cos(), r * th.sin(), 0.0]);
        }
    }
    let mut triangles = Vec::new();
    for j in 0..6 {
        triangles.push([0, 1 + j, 1 + (j + 1) % 6]);
    }
    for k in 1..rings {
        let a0 = ring_start[k];
        let na = 6 * k;
        let b0 = ring_start[k + 1];
        let nb = 6 * (k + 1);
        for s in 0..6 {
            let ia: Vec<usize> = (0..=k).map(|t| a0 + (s * k + t) % na).collect();
            let ib: Vec<usize> = (0..=k + 1).map(|t| b0 + (s * (k + 1) + t) % nb).collect();
            let (mut i, mut j) = (0usize, 0usize);
            while i < k || j < k + 1 {
                if j < k + 1 && j * k <= i * (k + 1) {
                    triangles.push([ia[i], ib[j], ib[j + 1]]);
                    j += 1;
                } else if i < k {
                    triangles.push([ia[i], ib[j], ia[i + 1]]);
                    i += 1;
                } else {
                    triangles.push([ia[i], ib[j], ib[j + 1]]);
                    j += 1;
                }
            }
        }
    }
    let boundary: Vec<usize> = (0..6 * rings).map(|j| ring_start[rings] + j).collect();
    let metric = vec![MetricTensor::IDENTITY; triangles.len()];
    Ok(SurfaceMesh {
        vertices,
        triangles,
        metric,
        boundary_loops: vec![boundary],
        involution: None,
        projection: None,
    })
}

fn annulus(p: &SurfaceParams) -> Result<SurfaceMesh> {
    if !(p.inner_radius > 0.0) || !(p.outer_radius > p.inner_radius) {
        return Err(Error::DegenerateParameter(format!(
            "annulus radii ({}, {}) must satisfy 0 < inner < outer",
            p.inner_radius, p.outer_radius
        )));
    }
    let ntheta = even_at_least(core::f64::consts::TAU * p.outer_radius / p.h, 8);
    let nr = (((p.outer_radius - p.inner_radius) / p.h).round() as usize).max(2);
    let mut vertices = Vec::new();
    for kr in 0..=nr {
        let r = p.inner_radius + (p.outer_radius - p.inner_radius) * kr as f64 / nr as f64;
        for j in 0..ntheta {
            let th = core::f64::consts::TAU * j as f64 / ntheta as f64;
            vertices.push([r * th.cos(), r * th.sin(), 0.0]);
        }
    }
    let vid = |kr: usize, j: usize| kr * ntheta + (j % ntheta);
    let mut triangles = Vec::new();
    for kr in 0..nr {
        for j in 0..ntheta {
            let v00 = vid(kr, j);
            let v10 = vid(kr, j + 1);
            let v01 = vid(kr + 1, j);
            let v11 = vid(kr + 1, j + 1);
            if (j + kr) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    let outer: Vec<usize> = (0..ntheta).map(|j| vid(nr, j)).collect();
    let inner: Vec<usize> = (0..ntheta).rev().map(|j| vid(0, j)).collect();
    let metric = vec![MetricTensor::IDENTITY; triangles.len()];
    Ok(SurfaceMesh {
        vertices,
        triangles,
        metric,
        boundary_loops: vec![outer, inner],
        involution: None,
        projection: None,
    })
}

fn even_at_least(x: f64, min: usize) -> usize {
    let n = ((x / 2.0).round() as usize * 2).max(min);
    n
}

fn flat_cylinder(p: &SurfaceParams) -> Result<SurfaceMesh> {
    if !(p.length > 0.0) || !(p.half_width > 0.0) {
        return Err(Error::DegenerateParameter(format!(
            "cylinder length {} and half_width {} must be positive",
            p.length, p.half_width
        )));
    }
    let ns = even_at_least(p.length / p.h, 4);
    let nt = even_at_least(2.0 * p.half_width / p.h, 4);
    let rad = p.length / core::f64::consts::TAU;
    let mut vertices = Vec::new();
    for i in 0..ns {
        let s = p.length * i as f64 / ns as f64;
        let th = s / rad;
        for j in 0..=nt {
            let t = -p.half_width + 2.0 * p.half_width * j as f64 / nt as f64;
            vertices.push([rad * th.cos(), rad * th.sin(), t]);
        }
    }
    let vid = |i: usize, j: usize| (i % ns) * (nt + 1) + j;
    let sp = |i: usize| p.length * i as f64 / ns as f64;
    let tp = |j: usize| -p.half_width + 2.0 * p.half_width * j as f64 / nt as f64;
    let mut triangles = Vec::new();
    let mut params: Vec<[[f64; 2]; 3]> = Vec::new();
    for i in 0..ns {
        for j in 0..nt {
            let cells: [[ (usize, usize); 3]; 2] = if (i + j) % 2 == 0 {
                [[(i, j), (i + 1, j), (i + 1, j + 1)], [(i, j), (i + 1, j + 1), (i, j + 1)]]
            } else {
                [[(i, j), (i + 1, j), (i, j + 1)], [(i + 1, j), (i + 1, j + 1), (i, j + 1)]]
            };
            for cell in cells {
                triangles.push([vid(cell[0].0, cell[0].1), vid(cell[1].0, cell[1].1), vid(cell[2].0, cell[2].1)]);
                params.push([
                    [sp(cell[0].0), tp(cell[0].1)],
                    [sp(cell[1].0), tp(cell[1].1)],
                    [sp(cell[2].0), tp(cell[2].1)],
                ]);
            }
        }
    }
    let metric = exact_param_metric(&vertices, &triangles, &params);
    // oriented walk order: top loop descending s, bottom ascending
    let top: Vec<usize> = (0..ns).rev().map(|i| vid(i, nt)).collect();
    let bottom: Vec<usize> = (0..ns).map(|i| vid(i, 0)).collect();
    Ok(SurfaceMesh {
        vertices,
        triangles,
        metric,
        boundary_loops: vec![top, bottom],
        involution: None,
        projection: None,
    })
}

fn exact_param_metric(
    vertices: &[[f64; 3]],
    triangles: &[[usize; 3]],
    params: &[[[f64; 2]; 3]],
) -> Vec<MetricTensor> {
    triangles
        .iter()
        .zip(params)
        .map(|(t, p)| {
            let f = triangle_frame([vertices[t[0]], vertices[t[1]], vertices[t[2]]]);
            tensor_from_params(f, *p, MetricTensor::IDENTITY)
        })
        .collect()
}

/// First fundamental form of the ruled Moebius embedding at parameter (s,t):
/// center circle radius `r0`, half-twist over circumference `len`.
fn ruled_fff(r0: f64, len: f64, s: f64, t: f64) -> MetricTensor {
    let w = core::f64::consts::TAU / len; // angle rate
    let hw = w / 2.0; // half-twist rate
    let (c, sn) = ((hw * s).cos(), (hw * s).sin());
    let r = r0 + t * c;
    // X(s,t) = (r cos(ws), r sin(ws), t sin(hw s))
    // X_s = (r_s cos - r w sin, r_s sin + r w cos, t hw cos), r_s = -t hw sn
    let rs = -t * hw * sn;
    let (cc, ss) = ((w * s).cos(), (w * s).sin());
    let xs = [rs * cc - r * w * ss, rs * ss + r * w * cc, t * hw * c];
    let xt = [c * cc, c * ss, sn];
    MetricTensor {
        a: xs[0] * xs[0] + xs[1] * xs[1] + xs[2] * xs[2],
        b: xs[0] * xt[0] + xs[1] * xt[1] + xs[2] * xt[2],
        c: xt[0] * xt[0] + xt[1] * xt[1] + xt[2] * xt[2],
    }
}

fn ruled_position(r0: f64, len: f64, s: f64, t: f64) -> [f64; 3] {
    let w = core::f64::consts::TAU / len;
    let hw = w / 2.0;
    let r = r0 + t * (hw * s).cos();
    [r * (w * s).cos(), r * (w * s).sin(), t * (hw * s).sin()]
}

/// Moebius band as the quotient of a structured (2 ns) x nt cylinder grid by
/// the deck map (i, j) -> (i + ns, nt - j). Flat variant: metric ds^2 + dt^2;
/// embedded variant: induced metric of the ruled embedding.
fn moebius(p: &SurfaceParams, embedded: bool) -> Result<SurfaceMesh> {
    if !(p.length > 0.0) || !(p.half_width > 0.0) {
        return Err(Error::DegenerateParameter(format!(
            "moebius length {} and half_width {} must be positive",
            p.length, p.half_width
        )));
    }
    let r0 = if embedded { p.center_radius } else { p.length / core::f64::consts::TAU };
    if embedded && p.half_width >= p.center_radius {
        return Err(Error::DegenerateParameter(format!(
            "embedded band pinches: half_width {} must be < center_radius {}",
            p.half_width, p.center_radius
        )));
    }
    let ns = even_at_least(p.length / p.h, 4);
    let nt = even_at_least(2.0 * p.half_width / p.h, 4);
    // quotient vertex ids: representatives are columns 0..ns
    let big_ns = 2 * ns;
    let q = |i: usize, j: usize| -> usize {
        let ii = i % big_ns;
        if ii < ns {
            ii * (nt + 1) + j
        } else {
            (ii - ns) * (nt + 1) + (nt - j)
        }
    };
    let sp = |i: usize| p.length * i as f64 / ns as f64; // cover param; base period = length
    let tp = |j: usize| -p.half_width + 2.0 * p.half_width * j as f64 / nt as f64;
    let nv = ns * (nt + 1);
    let mut vertices = vec![[0.0; 3]; nv];
    for i in 0..ns {
        for j in 0..=nt {
            // flat variant keeps planar representative coordinates (the ruled
            // embedding pinches when half_width reaches center_radius); seam
            // triangles get their true geometry from the metric tensor
            vertices[q(i, j)] = if embedded {
                ruled_position(r0, p.length, sp(i), tp(j))
            } else {
                [sp(i), tp(j), 0.0]
            };
        }
    }
    let mut triangles = Vec::new();
    let mut params: Vec<[[f64; 2]; 3]> = Vec::new();
    for i in 0..ns {
        for j in 0..nt {
            let cells: [[(usize, usize); 3]; 2] = if (i + j) % 2 == 0 {
                [[(i, j), (i + 1, j), (i + 1, j + 1)], [(i, j), (i + 1, j + 1), (i, j + 1)]]
            } else {
                [[(i, j), (i + 1, j), (i, j + 1)], [(i + 1, j), (i + 1, j + 1), (i, j + 1)]]
            };
            for cell in cells {
                triangles.push([q(cell[0].0, cell[0].1), q(cell[1].0, cell[1].1), q(cell[2].0, cell[2].1)]);
                params.push([
                    [sp(cell[0].0), tp(cell[0].1)],
                    [sp(cell[1].0), tp(cell[1].1)],
                    [sp(cell[2].0), tp(cell[2].1)],
                ]);
            }
        }
    }
    let metric: Vec<MetricTensor> = if embedded {
        triangles
            .iter()
            .zip(&params)
            .map(|(t, pr)| {
                let f = triangle_frame([vertices[t[0]], vertices[t[1]], vertices[t[2]]]);
                let cen = [
                    (pr[0][0] + pr[1][0] + pr[2][0]) / 3.0,
                    (pr[0][1] + pr[1][1] + pr[2][1]) / 3.0,
                ];
                tensor_from_params(f, *pr, ruled_fff(r0, p.length, cen[0], cen[1]))
            })
            .collect()
    } else {
        exact_param_metric(&vertices, &triangles, &params)
    };
    // single boundary loop: image of the cover's top row followed by the
    // bottom row (the half-twist joins them)
    let mut boundary = Vec::with_capacity(2 * ns);
    for i in 0..ns {
        boundary.push(q(i, nt));
    }
    for i in 0..ns {
        boundary.push(q(i, 0));
    }
    Ok(SurfaceMesh {
        vertices,
        triangles,
        metric,
        boundary_loops: vec![boundary],
        involution: None,
        projection: None,
    })
}

//! Mapped polar meshes: annuli for the radial problems and the periodic cell.

use std::collections::HashSet;
use std::f64::consts::PI;

use super::{BoundaryCircle, BoundaryEdge, BoundaryTag, Mesh, MeshError, PeriodicBox};
use crate::{cross, dist, sub, Point};

/// Splits quads of a ring grid (`rings` rings of `n` points each, closed in the
/// angular direction) along their shorter diagonal, counterclockwise.
fn ring_triangles(vertices: &[Point], n: usize, rings: usize) -> Vec<[usize; 3]> {
    let mut tris = Vec::with_capacity(2 * n * (rings - 1));
    for j in 0..rings - 1 {
        for i in 0..n {
            let a = j * n + i;
            let b = j * n + (i + 1) % n;
            let c = (j + 1) * n + (i + 1) % n;
            let d = (j + 1) * n + i;
            let pair = if dist(vertices[a], vertices[c]) <= dist(vertices[b], vertices[d]) {
                [[a, b, c], [a, c, d]]
            } else {
                [[a, b, d], [b, c, d]]
            };
            for mut t in pair {
                let [p, q, r] = t.map(|k| vertices[k]);
                if cross(sub(q, p), sub(r, p)) < 0.0 {
                    t.swap(1, 2);
                }
                tris.push(t);
            }
        }
    }
    tris
}

/// Directed edges whose reverse is absent, i.e. the boundary with the domain on the left.
fn boundary_of(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let directed: HashSet<(usize, usize)> = triangles
        .iter()
        .flat_map(|t| (0..3).map(move |i| (t[i], t[(i + 1) % 3])))
        .collect();
    let mut out: Vec<[usize; 2]> = triangles
        .iter()
        .flat_map(|t| (0..3).map(move |i| [t[i], t[(i + 1) % 3]]))
        .filter(|e| !directed.contains(&(e[1], e[0])))
        .collect();
    out.sort_unstable();
    out
}

fn ring_count(n_theta: usize, ratio: f64) -> usize {
    ((n_theta as f64 * ratio.ln() / (2.0 * PI)).round() as usize).max(2)
}

/// Annulus `r_in ≤ |x − center| ≤ r_out` with `n_theta` angular and (by default)
/// log-spaced radial divisions giving nearly isotropic cells.
pub fn annulus(
    center: Point,
    r_in: f64,
    r_out: f64,
    n_theta: usize,
    n_radial: Option<usize>,
    inner_tag: BoundaryTag,
    outer_tag: BoundaryTag,
) -> Result<Mesh, MeshError> {
    if !(r_in > 0.0 && r_out > r_in && n_theta >= 8) {
        return Err(MeshError::InvalidParameters(format!(
            "annulus needs 0 < r_in < r_out and n_theta ≥ 8, got ({r_in}, {r_out}, {n_theta})"
        )));
    }
    let m = n_radial.unwrap_or_else(|| ring_count(n_theta, r_out / r_in));
    let mut vertices = Vec::with_capacity(n_theta * (m + 1));
    for j in 0..=m {
        let r = if j == m { r_out } else { r_in * (r_out / r_in).powf(j as f64 / m as f64) };
        for i in 0..n_theta {
            let t = 2.0 * PI * i as f64 / n_theta as f64;
            vertices.push([center[0] + r * t.cos(), center[1] + r * t.sin()]);
        }
    }
    let triangles = ring_triangles(&vertices, n_theta, m + 1);
    let boundary_edges = boundary_of(&triangles)
        .into_iter()
        .map(|v| BoundaryEdge { v, tag: if v[0] < n_theta { inner_tag } else { outer_tag } })
        .collect();
    Ok(Mesh {
        vertices,
        triangles,
        boundary_edges,
        circles: vec![
            BoundaryCircle { tag: inner_tag, center, radius: r_in },
            BoundaryCircle { tag: outer_tag, center, radius: r_out },
        ],
        periodic: None,
    })
}

/// The periodic cell `(−2, 2)² \ B_η(0)` with opposite sides identified.
///
/// Rays from the hole to the square are log-spaced. Points are generated in the
/// first octant and mirrored, so the mesh is exactly invariant under the
/// symmetries of the square and opposite side vertices match bit-for-bit.
pub fn periodic_cell(eta: f64, n_theta: usize, n_radial: Option<usize>, hole_tag: BoundaryTag) -> Result<Mesh, MeshError> {
    if !(eta > 0.0 && eta < 2.0) {
        return Err(MeshError::InvalidParameters(format!("hole radius {eta} must lie in (0, 2)")));
    }
    if n_theta < 16 || n_theta % 8 != 0 {
        return Err(MeshError::InvalidParameters(format!("n_theta {n_theta} must be a multiple of 8, at least 16")));
    }
    let half = 2.0;
    let m = n_radial.unwrap_or_else(|| ring_count(n_theta, half / eta).max(2));
    let octant = n_theta / 8;
    let quarter = n_theta / 4;
    // Base points for angles φ ∈ [0, π/4].
    let base = |i: usize, j: usize| -> Point {
        let phi = 2.0 * PI * i as f64 / n_theta as f64;
        let (s, c) = phi.sin_cos();
        if j == m {
            let y = if i == octant { half } else { half * phi.tan() };
            return [half, y];
        }
        let reach = half / c;
        let r = eta * (reach / eta).powf(j as f64 / m as f64);
        if i == octant {
            let d = r * std::f64::consts::FRAC_1_SQRT_2;
            [d, d]
        } else if i == 0 {
            [r, 0.0]
        } else {
            [r * c, r * s]
        }
    };
    let point = |i: usize, j: usize| -> Point {
        let q = i / quarter;
        let r = i % quarter;
        let mut p = if r <= octant { base(r, j) } else {
            let b = base(quarter - r, j);
            [b[1], b[0]]
        };
        for _ in 0..q {
            // `+ 0.0` turns −0 into +0 so mirrored coordinates compare bitwise.
            p = [-p[1] + 0.0, p[0]];
        }
        p
    };
    let mut vertices = Vec::with_capacity(n_theta * (m + 1));
    for j in 0..=m {
        for i in 0..n_theta {
            vertices.push(point(i, j));
        }
    }
    let triangles = ring_triangles(&vertices, n_theta, m + 1);
    let boundary_edges = boundary_of(&triangles)
        .into_iter()
        .map(|v| BoundaryEdge { v, tag: if v[0] < n_theta { hole_tag } else { BoundaryTag::Periodic } })
        .collect();
    Ok(Mesh {
        vertices,
        triangles,
        boundary_edges,
        circles: vec![BoundaryCircle { tag: hole_tag, center: [0.0, 0.0], radius: eta }],
        periodic: Some(PeriodicBox { min: [-half, -half], max: [half, half] }),
    })
}

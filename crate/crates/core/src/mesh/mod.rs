//! Conforming triangulations of perforated domains with tagged boundary edges.

mod cdt;
mod io;
mod structured;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{cross, dist, sub, Point};

pub use cdt::{default_boundary_divisions, triangulate, triangulate_loops, BoundaryLoop, MIN_BOUNDARY_DIVISIONS};
pub use io::{read_mesh, write_mesh, write_values};
pub use structured::{annulus, periodic_cell};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("boundary_divisions {0} is below the minimum of {min}", min = MIN_BOUNDARY_DIVISIONS)]
    TooFewDivisions(usize),
    #[error("h_target must be positive, got {0}")]
    InvalidSize(f64),
    #[error("cavity {0} polygon self-intersects")]
    SelfIntersection(usize),
    #[error("cavities {0} and {1} overlap; separation must pass before meshing")]
    Overlap(usize, usize),
    #[error("cavity {0} crosses the outer boundary")]
    CavityOutside(usize),
    #[error("refinement stopped after {vertices} vertices with min angle {min_angle:.2}°; raise the budget or coarsen")]
    RefinementIncomplete { vertices: usize, min_angle: f64 },
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("invalid structured mesh parameters: {0}")]
    InvalidParameters(String),
    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What lives on a boundary edge.
///
/// Besides the three tags of the perforated problem, the auxiliary problems use
/// Neumann variants and the sides of the periodic cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryTag {
    OuterDirichlet,
    OuterNeumann,
    CavityDirichlet(usize),
    CavityNeumann(usize),
    CavityRobin(usize),
    Periodic,
}

impl BoundaryTag {
    pub fn is_dirichlet(self) -> bool {
        matches!(self, BoundaryTag::OuterDirichlet | BoundaryTag::CavityDirichlet(_))
    }

    pub fn is_robin(self) -> bool {
        matches!(self, BoundaryTag::CavityRobin(_))
    }

    pub fn cavity(self) -> Option<usize> {
        match self {
            BoundaryTag::CavityDirichlet(k) | BoundaryTag::CavityNeumann(k) | BoundaryTag::CavityRobin(k) => Some(k),
            _ => None,
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryTag::OuterDirichlet => write!(f, "outer_dirichlet"),
            BoundaryTag::OuterNeumann => write!(f, "outer_neumann"),
            BoundaryTag::CavityDirichlet(k) => write!(f, "cavity_dirichlet:{k}"),
            BoundaryTag::CavityNeumann(k) => write!(f, "cavity_neumann:{k}"),
            BoundaryTag::CavityRobin(k) => write!(f, "cavity_robin:{k}"),
            BoundaryTag::Periodic => write!(f, "periodic"),
        }
    }
}

impl std::str::FromStr for BoundaryTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (head, idx) = match s.split_once(':') {
            Some((h, i)) => (h, Some(i.parse::<usize>().map_err(|e| format!("bad cavity index in {s}: {e}"))?)),
            None => (s, None),
        };
        match (head, idx) {
            ("outer_dirichlet", None) => Ok(BoundaryTag::OuterDirichlet),
            ("outer_neumann", None) => Ok(BoundaryTag::OuterNeumann),
            ("periodic", None) => Ok(BoundaryTag::Periodic),
            ("cavity_dirichlet", Some(k)) => Ok(BoundaryTag::CavityDirichlet(k)),
            ("cavity_neumann", Some(k)) => Ok(BoundaryTag::CavityNeumann(k)),
            ("cavity_robin", Some(k)) => Ok(BoundaryTag::CavityRobin(k)),
            _ => Err(format!("unknown boundary tag {s}")),
        }
    }
}

/// A boundary edge, oriented with the domain on its left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub tag: BoundaryTag,
}

/// A tagged boundary that approximates a circle; refinement projects new vertices onto it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryCircle {
    pub tag: BoundaryTag,
    pub center: Point,
    pub radius: f64,
}

/// An axis-aligned box whose opposite sides are identified.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicBox {
    pub min: Point,
    pub max: Point,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub circles: Vec<BoundaryCircle>,
    pub periodic: Option<PeriodicBox>,
}

impl Mesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        0.5 * cross(sub(b, a), sub(c, a))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn h_max(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |i| (t[i], t[(i + 1) % 3])))
            .map(|(a, b)| dist(self.vertices[a], self.vertices[b]))
            .fold(0.0, f64::max)
    }

    /// Longest non-periodic boundary edge.
    pub fn h_boundary(&self) -> f64 {
        self.boundary_edges
            .iter()
            .filter(|e| e.tag != BoundaryTag::Periodic)
            .map(|e| self.edge_length(e))
            .fold(0.0, f64::max)
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        dist(self.vertices[e.v[0]], self.vertices[e.v[1]])
    }

    pub fn tags(&self) -> Vec<BoundaryTag> {
        let mut t: Vec<_> = self.boundary_edges.iter().map(|e| e.tag).collect();
        t.sort();
        t.dedup();
        t
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary_edges.iter().filter(move |e| e.tag == tag)
    }

    pub fn tag_length(&self, tag: BoundaryTag) -> f64 {
        self.edges_with_tag(tag).map(|e| self.edge_length(e)).sum()
    }

    /// All undirected edges, each listed once with the smaller index first.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut e: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |i| {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                [a.min(b), a.max(b)]
            }))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Number of closed loops formed by the edges carrying `tag`, or `None`
    /// if the edges do not decompose into closed loops.
    pub fn loop_count(&self, tag: BoundaryTag) -> Option<usize> {
        let mut next: HashMap<usize, usize> = HashMap::new();
        for e in self.edges_with_tag(tag) {
            if next.insert(e.v[0], e.v[1]).is_some() {
                return None;
            }
        }
        let mut seen: HashMap<usize, bool> = next.keys().map(|&k| (k, false)).collect();
        let mut loops = 0;
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        for s in starts {
            if seen[&s] {
                continue;
            }
            let mut v = s;
            loop {
                *seen.get_mut(&v)? = true;
                v = *next.get(&v)?;
                if v == s {
                    break;
                }
                if seen[&v] {
                    return None;
                }
            }
            loops += 1;
        }
        Some(loops)
    }

    /// For periodic meshes, the representative vertex of each vertex after
    /// identifying opposite sides; the identity otherwise.
    pub fn periodic_representatives(&self) -> Vec<usize> {
        let n = self.vertices.len();
        let Some(pb) = self.periodic else {
            return (0..n).collect();
        };
        let scale = (pb.max[0] - pb.min[0]).max(pb.max[1] - pb.min[1]);
        let tol = 1e-10 * scale;
        let wrap = |p: Point| -> Point {
            let mut q = p;
            for d in 0..2 {
                if (q[d] - pb.max[d]).abs() <= tol {
                    q[d] = pb.min[d];
                }
            }
            q
        };
        let key = |p: Point| -> (i64, i64) {
            ((p[0] / tol).round() as i64, (p[1] / tol).round() as i64)
        };
        let mut canon: HashMap<(i64, i64), usize> = HashMap::new();
        let mut rep = vec![0; n];
        // Vertices already on the min sides claim the key first, then the wrapped ones map onto them.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| {
            let p = self.vertices[i];
            (p[0] - pb.max[0]).abs() <= tol || (p[1] - pb.max[1]).abs() <= tol
        });
        for i in order {
            let k = key(wrap(self.vertices[i]));
            rep[i] = *canon.entry(k).or_insert(i);
        }
        rep
    }

    /// Checks the structural invariants; returns a list of violations.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for t in 0..self.triangles.len() {
            if !(self.triangle_area(t) > 0.0) {
                problems.push(format!("triangle {t} has nonpositive area"));
            }
        }
        let mut count: HashMap<[usize; 2], usize> = HashMap::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                *count.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
        let mut boundary: HashMap<[usize; 2], usize> = HashMap::new();
        for e in &self.boundary_edges {
            *boundary.entry([e.v[0].min(e.v[1]), e.v[0].max(e.v[1])]).or_default() += 1;
        }
        for (e, &c) in &count {
            let on_boundary = boundary.get(e).copied().unwrap_or(0);
            match (c, on_boundary) {
                (1, 1) | (2, 0) => {}
                _ => problems.push(format!("edge {e:?} shared by {c} triangles, tagged {on_boundary} times")),
            }
        }
        for e in boundary.keys() {
            if !count.contains_key(e) {
                problems.push(format!("boundary edge {e:?} belongs to no triangle"));
            }
        }
        problems
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshQuality {
    pub min_angle_deg: f64,
    /// Longest edge over the shortest altitude, normalised to 1 for an equilateral triangle.
    pub max_aspect_ratio: f64,
    pub h_max: f64,
    pub h_boundary: f64,
    pub triangles: usize,
    pub nonpositive_area: usize,
}

impl MeshQuality {
    /// The gate applied before assembly.
    pub fn acceptable(&self) -> bool {
        self.nonpositive_area == 0 && self.min_angle_deg > 0.5
    }
}

pub fn triangle_angles(a: Point, b: Point, c: Point) -> [f64; 3] {
    let ang = |p: Point, q: Point, r: Point| {
        let (u, v) = (sub(q, p), sub(r, p));
        cross(u, v).abs().atan2(crate::dot(u, v)).to_degrees()
    };
    [ang(a, b, c), ang(b, c, a), ang(c, a, b)]
}

pub fn mesh_quality(mesh: &Mesh) -> MeshQuality {
    let mut min_angle = f64::INFINITY;
    let mut max_aspect: f64 = 0.0;
    let mut bad = 0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = tri.map(|i| mesh.vertices[i]);
        let area = mesh.triangle_area(t);
        if !(area > 0.0) {
            bad += 1;
            min_angle = 0.0;
            max_aspect = f64::INFINITY;
            continue;
        }
        let angles = triangle_angles(a, b, c);
        min_angle = min_angle.min(angles.iter().copied().fold(f64::INFINITY, f64::min));
        let longest = dist(a, b).max(dist(b, c)).max(dist(c, a));
        let min_altitude = 2.0 * area / longest;
        max_aspect = max_aspect.max(longest / min_altitude * (3f64.sqrt() / 2.0));
    }
    MeshQuality {
        min_angle_deg: if mesh.triangles.is_empty() { 0.0 } else { min_angle },
        max_aspect_ratio: max_aspect,
        h_max: mesh.h_max(),
        h_boundary: mesh.h_boundary(),
        triangles: mesh.triangles.len(),
        nonpositive_area: bad,
    }
}

/// Splits every triangle into four through its edge midpoints. New vertices on
/// circular boundaries are projected back onto the circle.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
    let circle_of: HashMap<BoundaryTag, (Point, f64)> =
        mesh.circles.iter().map(|c| (c.tag, (c.center, c.radius))).collect();
    let mut boundary_tag: HashMap<[usize; 2], BoundaryTag> = HashMap::new();
    for e in &mesh.boundary_edges {
        boundary_tag.insert([e.v[0].min(e.v[1]), e.v[0].max(e.v[1])], e.tag);
    }
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        let key = [a.min(b), a.max(b)];
        *midpoint.entry(key).or_insert_with(|| {
            let (p, q) = (vertices[a], vertices[b]);
            let mut m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            if let Some((c, r)) = boundary_tag.get(&key).and_then(|t| circle_of.get(t)) {
                let d = dist(m, *c);
                if d > 0.0 {
                    m = [c[0] + r * (m[0] - c[0]) / d, c[1] + r * (m[1] - c[1]) / d];
                }
            }
            vertices.push(m);
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for &[a, b, c] in &mesh.triangles {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let m = midpoint[&[e.v[0].min(e.v[1]), e.v[0].max(e.v[1])]];
        boundary_edges.push(BoundaryEdge { v: [e.v[0], m], tag: e.tag });
        boundary_edges.push(BoundaryEdge { v: [m, e.v[1]], tag: e.tag });
    }
    Mesh { vertices, triangles, boundary_edges, circles: mesh.circles.clone(), periodic: mesh.periodic }
}

/// Point location over a bucket grid of triangle bounding boxes.
pub struct Locator<'a> {
    mesh: &'a Mesh,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let nt = mesh.triangles.len().max(1);
        let w = (hi[0] - lo[0]).max(1e-300);
        let h = (hi[1] - lo[1]).max(1e-300);
        let cell = (w * h / nt as f64).sqrt().max(1e-300) * 1.5;
        let nx = ((w / cell).ceil() as usize).clamp(1, 4096);
        let ny = ((h / cell).ceil() as usize).clamp(1, 4096);
        let cell = (w / nx as f64).max(h / ny as f64);
        let bucket = |x: f64, o: f64, n: usize| (((x - o) / cell).floor().max(0.0) as usize).min(n - 1);
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let ps = tri.map(|i| mesh.vertices[i]);
            let (x0, x1) = (ps.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min), ps.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max));
            let (y0, y1) = (ps.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min), ps.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max));
            for iy in bucket(y0, lo[1], ny)..=bucket(y1, lo[1], ny) {
                for ix in bucket(x0, lo[0], nx)..=bucket(x1, lo[0], nx) {
                    lists[iy * nx + ix].push(t);
                }
            }
        }
        let mut start = Vec::with_capacity(lists.len() + 1);
        let mut items = Vec::new();
        start.push(0);
        for l in lists {
            items.extend(l);
            start.push(items.len());
        }
        Locator { mesh, origin: lo, cell, nx, ny, start, items }
    }

    /// The triangle containing `p` and the barycentric coordinates of `p` in it.
    /// Points within a relative tolerance of an edge are accepted.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let fx = (p[0] - self.origin[0]) / self.cell;
        let fy = (p[1] - self.origin[1]) / self.cell;
        if fx < -1e-9 || fy < -1e-9 || fx > self.nx as f64 + 1e-9 || fy > self.ny as f64 + 1e-9 {
            return None;
        }
        let ix = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let iy = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        let b = iy * self.nx + ix;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.items[self.start[b]..self.start[b + 1]] {
            let [a, bb, c] = self.mesh.triangles[t].map(|i| self.mesh.vertices[i]);
            let area2 = cross(sub(bb, a), sub(c, a));
            let l1 = cross(sub(bb, p), sub(c, p)) / area2;
            let l2 = cross(sub(c, p), sub(a, p)) / area2;
            let l3 = 1.0 - l1 - l2;
            let worst = l1.min(l2).min(l3);
            if worst >= 0.0 {
                return Some((t, [l1, l2, l3]));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, [l1, l2, l3], worst));
            }
        }
        match best {
            Some((t, l, worst)) if worst > -1e-9 => Some((t, l)),
            _ => None,
        }
    }

    /// Interpolates nodal values at `p`.
    pub fn interpolate(&self, values: &[f64], p: Point) -> Option<f64> {
        self.locate(p).map(|(t, l)| {
            let tri = self.mesh.triangles[t];
            l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Mesh {
        Mesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            boundary_edges: (0..4)
                .map(|i| BoundaryEdge { v: [i, (i + 1) % 4], tag: BoundaryTag::OuterDirichlet })
                .collect(),
            circles: vec![],
            periodic: None,
        }
    }

    #[test]
    fn equilateral_quality() {
        let m = Mesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]],
            triangles: vec![[0, 1, 2]],
            boundary_edges: vec![],
            circles: vec![],
            periodic: None,
        };
        let q = mesh_quality(&m);
        assert!((q.min_angle_deg - 60.0).abs() < 1e-12);
        assert!((q.max_aspect_ratio - 1.0).abs() < 1e-12);
        assert_eq!(q.nonpositive_area, 0);
    }

    #[test]
    fn degenerate_triangle_flagged() {
        let mut m = square();
        m.vertices.push([2.0, 0.0]);
        m.vertices.push([3.0, 0.0]);
        m.triangles.push([1, 4, 5]);
        let q = mesh_quality(&m);
        assert_eq!(q.nonpositive_area, 1);
        assert!(!q.acceptable());
    }

    #[test]
    fn uniform_refinement_of_square() {
        let m = square();
        assert!(m.validate().is_empty());
        let r = refine_uniform(&m);
        assert_eq!(r.triangles.len(), 8);
        assert_eq!(r.h_max(), m.h_max() / 2.0);
        assert!(r.validate().is_empty(), "{:?}", r.validate());
        assert_eq!(r.loop_count(BoundaryTag::OuterDirichlet), Some(1));
        assert!((r.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tag_text_round_trip() {
        for t in [
            BoundaryTag::OuterDirichlet,
            BoundaryTag::OuterNeumann,
            BoundaryTag::CavityDirichlet(3),
            BoundaryTag::CavityNeumann(0),
            BoundaryTag::CavityRobin(17),
            BoundaryTag::Periodic,
        ] {
            assert_eq!(t.to_string().parse::<BoundaryTag>().unwrap(), t);
        }
        assert!("cavity_robin".parse::<BoundaryTag>().is_err());
    }

    #[test]
    fn locator_finds_points() {
        let m = refine_uniform(&refine_uniform(&square()));
        let loc = Locator::new(&m);
        let values: Vec<f64> = m.vertices.iter().map(|p| 2.0 * p[0] - p[1] + 0.5).collect();
        for p in [[0.3, 0.7], [0.0, 0.0], [1.0, 0.5], [0.123, 0.987]] {
            let v = loc.interpolate(&values, p).unwrap();
            assert!((v - (2.0 * p[0] - p[1] + 0.5)).abs() < 1e-12);
        }
        assert!(loc.locate([1.5, 0.5]).is_none());
    }
}

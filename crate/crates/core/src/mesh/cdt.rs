//! Constrained Delaunay triangulation with Ruppert refinement (backed by spade).

use std::collections::{HashMap, HashSet};

use spade::handles::FixedVertexHandle;
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use super::{mesh_quality, BoundaryCircle, BoundaryEdge, BoundaryTag, Mesh, MeshError};
use crate::geometry::{polygon_self_intersects, CavityBc, OuterDomain, PerforationLayout, ReferenceShape};
use crate::{dist, Point};

pub const MIN_BOUNDARY_DIVISIONS: usize = 12;
const ANGLE_LIMIT_DEG: f64 = 20.0;

/// A closed input polygon. Points may be given in either orientation.
#[derive(Clone, Debug)]
pub struct BoundaryLoop {
    pub points: Vec<Point>,
    pub tag: BoundaryTag,
    /// Set when the polygon approximates a circle.
    pub circle: Option<(Point, f64)>,
}

impl BoundaryLoop {
    pub fn circle(center: Point, radius: f64, divisions: usize, tag: BoundaryTag) -> Self {
        let points = (0..divisions)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / divisions as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        BoundaryLoop { points, tag, circle: Some((center, radius)) }
    }
}

/// `max(32, ⌈4π εη / h_target⌉)`: cavity edges no longer than half the target size.
pub fn default_boundary_divisions(layout: &PerforationLayout, h_target: f64) -> usize {
    let n = (4.0 * std::f64::consts::PI * layout.cavity_scale() / h_target).ceil();
    (n as usize).max(32)
}

/// Triangulates the region bounded by the first loop with the remaining loops as holes.
///
/// Elements are refined to a 20° minimum angle and an area at most that of an
/// equilateral triangle of side `h_max`. Loop edges are kept intact, so every
/// boundary edge of the result is an input edge.
pub fn triangulate_loops(loops: &[BoundaryLoop], h_max: f64) -> Result<Mesh, MeshError> {
    if !(h_max.is_finite() && h_max > 0.0) {
        return Err(MeshError::InvalidSize(h_max));
    }
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut loop_of: HashMap<FixedVertexHandle, usize> = HashMap::new();
    let mut input_vertices = 0;
    for (li, l) in loops.iter().enumerate() {
        let handles: Vec<FixedVertexHandle> = l
            .points
            .iter()
            .map(|p| cdt.insert(Point2::new(p[0], p[1])))
            .collect::<Result<_, _>>()
            .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
        for (i, &h) in handles.iter().enumerate() {
            if loop_of.insert(h, li).is_some() {
                return Err(MeshError::Triangulation(format!("loop {li} vertex {i} coincides with another input vertex")));
            }
            let next = handles[(i + 1) % handles.len()];
            if cdt.can_add_constraint(h, next) {
                cdt.add_constraint(h, next);
            } else {
                return Err(MeshError::Triangulation(format!("loop {li} edge {i} crosses another constraint")));
            }
        }
        input_vertices += handles.len();
    }

    let area: f64 = {
        let outer = &loops[0].points;
        crate::geometry::signed_area(outer).abs()
    };
    let max_area = 3f64.sqrt() / 4.0 * h_max * h_max;
    let budget = (20.0 * (area / max_area + input_vertices as f64)) as usize + 1000;
    let result = cdt.refine(
        RefinementParameters::new()
            .with_angle_limit(AngleLimit::from_deg(ANGLE_LIMIT_DEG))
            .with_max_allowed_area(max_area)
            .with_max_additional_vertices(budget.min(20_000_000))
            .keep_constraint_edges()
            .exclude_outer_faces(true),
    );
    let excluded: HashSet<_> = result.excluded_faces.iter().copied().collect();

    let mut index: HashMap<FixedVertexHandle, usize> = HashMap::new();
    let mut vertices: Vec<Point> = Vec::new();
    let mut triangles = Vec::new();
    let mut boundary_edges = Vec::new();
    let mut id = |h: FixedVertexHandle, pos: Point2<f64>, vertices: &mut Vec<Point>| -> usize {
        *index.entry(h).or_insert_with(|| {
            vertices.push([pos.x, pos.y]);
            vertices.len() - 1
        })
    };
    // Visit faces in handle order so numbering is deterministic.
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let vs = face.vertices();
        let tri = [0, 1, 2].map(|i| id(vs[i].fix(), vs[i].position(), &mut vertices));
        triangles.push(tri);
        for e in face.adjacent_edges() {
            let twin = e.rev().face();
            let outside = match twin.as_inner() {
                None => true,
                Some(f) => excluded.contains(&f.fix()),
            };
            if outside {
                let (a, b) = (e.from(), e.to());
                let la = loop_of.get(&a.fix());
                let lb = loop_of.get(&b.fix());
                let tag = match (la, lb) {
                    (Some(x), Some(y)) if x == y => loops[*x].tag,
                    _ => return Err(MeshError::Triangulation("boundary edge does not follow an input loop".into())),
                };
                let va = id(a.fix(), a.position(), &mut vertices);
                let vb = id(b.fix(), b.position(), &mut vertices);
                boundary_edges.push(BoundaryEdge { v: [va, vb], tag });
            }
        }
    }
    let circles = loops
        .iter()
        .filter_map(|l| l.circle.map(|(center, radius)| BoundaryCircle { tag: l.tag, center, radius }))
        .collect();
    let mesh = Mesh { vertices, triangles, boundary_edges, circles, periodic: None };
    if !result.refinement_complete {
        let q = mesh_quality(&mesh);
        return Err(MeshError::RefinementIncomplete { vertices: mesh.vertices.len(), min_angle: q.min_angle_deg });
    }
    Ok(mesh)
}

fn outer_loop(outer: &OuterDomain, h: f64) -> BoundaryLoop {
    match *outer {
        OuterDomain::Box { min, max } => {
            let corners = [min, [max[0], min[1]], max, [min[0], max[1]]];
            let mut points = Vec::new();
            for i in 0..4 {
                let (a, b) = (corners[i], corners[(i + 1) % 4]);
                let n = ((dist(a, b) / h).ceil() as usize).max(1);
                for s in 0..n {
                    let t = s as f64 / n as f64;
                    points.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                }
            }
            BoundaryLoop { points, tag: BoundaryTag::OuterDirichlet, circle: None }
        }
        OuterDomain::Disk { center, radius } => {
            let n = ((2.0 * std::f64::consts::PI * radius / h).ceil() as usize).max(32);
            BoundaryLoop::circle(center, radius, n, BoundaryTag::OuterDirichlet)
        }
    }
}

fn shape_radius(shape: &ReferenceShape) -> f64 {
    match shape {
        ReferenceShape::Disk { radius } => *radius,
        ReferenceShape::Polygon { vertices, .. } => {
            vertices.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
        }
    }
}

/// Meshes the perforated domain of `layout`. Hole-free regions are meshed with
/// [`triangulate_loops`] on a single loop.
pub fn triangulate(layout: &PerforationLayout, h_target: f64, boundary_divisions: usize) -> Result<Mesh, MeshError> {
    if boundary_divisions < MIN_BOUNDARY_DIVISIONS {
        return Err(MeshError::TooFewDivisions(boundary_divisions));
    }
    if !(h_target.is_finite() && h_target > 0.0) {
        return Err(MeshError::InvalidSize(h_target));
    }
    let scale = layout.cavity_scale();
    let reach: Vec<f64> = layout.cavities.iter().map(|c| scale * shape_radius(&c.reference_shape)).collect();
    for (k, c) in layout.cavities.iter().enumerate() {
        if layout.outer_domain.distance_to_boundary(c.center) <= reach[k] {
            return Err(MeshError::CavityOutside(k));
        }
    }
    // Bounding-circle overlap test after sorting by x.
    let mut order: Vec<usize> = (0..layout.cavities.len()).collect();
    order.sort_by(|&a, &b| layout.cavities[a].center[0].total_cmp(&layout.cavities[b].center[0]));
    let max_reach = reach.iter().copied().fold(0.0, f64::max);
    for (p, &i) in order.iter().enumerate() {
        for &j in &order[p + 1..] {
            let (ci, cj) = (layout.cavities[i].center, layout.cavities[j].center);
            if cj[0] - ci[0] > 2.0 * max_reach {
                break;
            }
            if dist(ci, cj) <= reach[i] + reach[j] {
                return Err(MeshError::Overlap(i.min(j), i.max(j)));
            }
        }
    }

    let mut loops = vec![outer_loop(&layout.outer_domain, h_target)];
    for (k, c) in layout.cavities.iter().enumerate() {
        let points = layout.cavity_polygon(k, boundary_divisions);
        if polygon_self_intersects(&points) {
            return Err(MeshError::SelfIntersection(k));
        }
        let tag = match c.bc {
            CavityBc::Dirichlet => BoundaryTag::CavityDirichlet(k),
            CavityBc::Robin { .. } => BoundaryTag::CavityRobin(k),
        };
        let circle = match c.reference_shape {
            ReferenceShape::Disk { radius } => Some((c.center, radius * scale)),
            ReferenceShape::Polygon { .. } => None,
        };
        loops.push(BoundaryLoop { points, tag, circle });
    }
    triangulate_loops(&loops, h_target)
}

//! Cavity layouts and the audits of their structural assumptions.
//!
//! A cavity is `center + εη · reference_shape`. The reference shape must sit
//! inside `B_{R2}(0)` and contain a ball of radius at least `R1`; the centres
//! must be `2εR3` apart and `εR3` away from the outer boundary, and the balls
//! `B_{εR4}` around Dirichlet and sign-definite Robin centres must cover the
//! domain.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::RobinModel;
use crate::quadrature::gauss_legendre;
use crate::{cross, dist, sub, Point};

/// Relative slack used when comparing ratios against 1.
const RATIO_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("eta must lie in (0, 1], got {0}")]
    InvalidEta(f64),
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("mu must be at least 1, got {0}")]
    InvalidMu(f64),
    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("layout has no cavities")]
    EmptyLayout,
    #[error("invalid radii: {0}")]
    InvalidRadii(String),
    #[error("invalid outer domain: {0}")]
    InvalidOuterDomain(String),
    #[error("invalid reference shape: {0}")]
    InvalidShape(String),
    #[error("cavity {index} has its center {center:?} outside the outer domain")]
    CenterOutside { index: usize, center: Point },
    #[error("boundary condition list has {got} entries for {expected} cavities")]
    BcCountMismatch { expected: usize, got: usize },
    #[error("covering needs at least one Dirichlet or sign-definite Robin cavity")]
    NoQualifyingCavity,
    #[error("sampling pitch {pitch} exceeds the certifiable maximum {max}")]
    PitchTooCoarse { pitch: f64, max: f64 },
    #[error("robin model supplies no weight alpha for sign-definite cavities")]
    MissingAlpha,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceShape {
    Disk {
        radius: f64,
    },
    /// Vertices in reference coordinates, either orientation.
    Polygon {
        vertices: Vec<Point>,
        star_shaped: bool,
    },
}

impl Default for ReferenceShape {
    fn default() -> Self {
        ReferenceShape::Disk { radius: 1.0 }
    }
}

impl ReferenceShape {
    /// Boundary points in reference coordinates, counterclockwise, at least `divisions` of them.
    pub fn boundary_points(&self, divisions: usize) -> Vec<Point> {
        match self {
            ReferenceShape::Disk { radius } => (0..divisions)
                .map(|j| {
                    let t = 2.0 * PI * j as f64 / divisions as f64;
                    [radius * t.cos(), radius * t.sin()]
                })
                .collect(),
            ReferenceShape::Polygon { vertices, .. } => {
                let verts = ccw(vertices);
                let perim: f64 = (0..verts.len())
                    .map(|i| dist(verts[i], verts[(i + 1) % verts.len()]))
                    .sum();
                let mut out = Vec::new();
                for i in 0..verts.len() {
                    let (a, b) = (verts[i], verts[(i + 1) % verts.len()]);
                    let pieces = ((dist(a, b) / perim * divisions as f64).ceil() as usize).max(1);
                    for s in 0..pieces {
                        let t = s as f64 / pieces as f64;
                        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                    }
                }
                out
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            ReferenceShape::Disk { radius } => PI * radius * radius,
            ReferenceShape::Polygon { vertices, .. } => signed_area(vertices).abs(),
        }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        match self {
            ReferenceShape::Disk { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(GeometryError::InvalidShape(format!("disk radius {radius}")));
                }
            }
            ReferenceShape::Polygon { vertices, .. } => {
                if vertices.len() < 3 {
                    return Err(GeometryError::InvalidShape("polygon needs 3 vertices".into()));
                }
                if signed_area(vertices).abs() <= 0.0 {
                    return Err(GeometryError::InvalidShape("degenerate polygon".into()));
                }
                if polygon_self_intersects(vertices) {
                    return Err(GeometryError::InvalidShape("polygon self-intersects".into()));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn signed_area(p: &[Point]) -> f64 {
    let n = p.len();
    0.5 * (0..n).map(|i| cross(p[i], p[(i + 1) % n])).sum::<f64>()
}

fn ccw(p: &[Point]) -> Vec<Point> {
    let mut v = p.to_vec();
    if signed_area(&v) < 0.0 {
        v.reverse();
    }
    v
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o = |p: Point, q: Point, r: Point| cross(sub(q, p), sub(r, p));
    let (d1, d2, d3, d4) = (o(a, b, c), o(a, b, d), o(c, d, a), o(c, d, b));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Proper crossings between non-adjacent edges of a closed polygon.
pub fn polygon_self_intersects(p: &[Point]) -> bool {
    let n = p.len();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct InnerBall {
    pub center: Point,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Hash)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CavityBc {
    Dirichlet,
    Robin { sign_definite: bool },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CavitySpec {
    pub center: Point,
    pub reference_shape: ReferenceShape,
    pub inner_ball: InnerBall,
    pub bc: CavityBc,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OuterDomain {
    Box { min: Point, max: Point },
    Disk { center: Point, radius: f64 },
}

impl Default for OuterDomain {
    fn default() -> Self {
        OuterDomain::Box { min: [0.0, 0.0], max: [1.0, 1.0] }
    }
}

impl OuterDomain {
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            OuterDomain::Box { min, max } => {
                p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1]
            }
            OuterDomain::Disk { center, radius } => dist(p, center) <= radius,
        }
    }

    /// Distance from an interior point to the boundary (negative outside).
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        match *self {
            OuterDomain::Box { min, max } => (p[0] - min[0])
                .min(max[0] - p[0])
                .min(p[1] - min[1])
                .min(max[1] - p[1]),
            OuterDomain::Disk { center, radius } => radius - dist(p, center),
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            OuterDomain::Box { min, max } => (max[0] - min[0]) * (max[1] - min[1]),
            OuterDomain::Disk { radius, .. } => PI * radius * radius,
        }
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        match *self {
            OuterDomain::Box { min, max } => (min, max),
            OuterDomain::Disk { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match *self {
            OuterDomain::Box { min, max } => OuterDomain::Box {
                min: [min[0] * s, min[1] * s],
                max: [max[0] * s, max[1] * s],
            },
            OuterDomain::Disk { center, radius } => OuterDomain::Disk {
                center: [center[0] * s, center[1] * s],
                radius: radius * s,
            },
        }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let ok = match *self {
            OuterDomain::Box { min, max } => {
                min.iter().chain(max.iter()).all(|v| v.is_finite())
                    && max[0] > min[0]
                    && max[1] > min[1]
            }
            OuterDomain::Disk { center, radius } => {
                center.iter().all(|v| v.is_finite()) && radius.is_finite() && radius > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidOuterDomain(format!("{self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Radii {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
}

impl Default for Radii {
    fn default() -> Self {
        Radii { r1: 0.5, r2: 1.0, r3: 1.9, r4: 3.0 }
    }
}

impl Radii {
    /// Requires `0 < R1 < R2 < R3` and `R4 > 0`. `R4` is the covering radius and is
    /// not ordered against the others so that undersized coverings can be audited.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let all_finite = [self.r1, self.r2, self.r3, self.r4].iter().all(|r| r.is_finite());
        if !all_finite || self.r1 <= 0.0 || self.r1 >= self.r2 || self.r2 >= self.r3 || self.r4 <= 0.0 {
            return Err(GeometryError::InvalidRadii(format!(
                "need 0 < R1 < R2 < R3 and R4 > 0, got ({}, {}, {}, {})",
                self.r1, self.r2, self.r3, self.r4
            )));
        }
        Ok(())
    }
}

/// The partition of cavity indices by boundary condition.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct IndexSets {
    pub dirichlet: Vec<usize>,
    pub robin_indefinite: Vec<usize>,
    pub robin_definite: Vec<usize>,
}

impl IndexSets {
    pub fn from_bcs(bcs: impl IntoIterator<Item = CavityBc>) -> Self {
        let mut s = IndexSets::default();
        for (k, bc) in bcs.into_iter().enumerate() {
            match bc {
                CavityBc::Dirichlet => s.dirichlet.push(k),
                CavityBc::Robin { sign_definite: false } => s.robin_indefinite.push(k),
                CavityBc::Robin { sign_definite: true } => s.robin_definite.push(k),
            }
        }
        s
    }

    /// Disjoint and exhaustive over `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &k in self.dirichlet.iter().chain(&self.robin_indefinite).chain(&self.robin_definite) {
            if k >= n || seen[k] {
                return false;
            }
            seen[k] = true;
        }
        seen.into_iter().all(|s| s)
    }

    /// Indices whose centres take part in the covering condition.
    pub fn covering_centers(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.dirichlet.iter().chain(&self.robin_definite).copied().collect();
        v.sort_unstable();
        v
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PerforationLayout {
    pub epsilon: f64,
    pub eta: f64,
    pub cavities: Vec<CavitySpec>,
    pub index_sets: IndexSets,
    pub radii: Radii,
    pub outer_domain: OuterDomain,
}

impl PerforationLayout {
    /// Validates and assembles a layout; the index sets are derived from the cavity BCs.
    pub fn new(
        epsilon: f64,
        eta: f64,
        cavities: Vec<CavitySpec>,
        radii: Radii,
        outer_domain: OuterDomain,
    ) -> Result<Self, GeometryError> {
        validate_scales(epsilon, eta)?;
        radii.validate()?;
        outer_domain.validate()?;
        if cavities.is_empty() {
            return Err(GeometryError::EmptyLayout);
        }
        for (index, c) in cavities.iter().enumerate() {
            c.reference_shape.validate()?;
            if !outer_domain.contains(c.center) {
                return Err(GeometryError::CenterOutside { index, center: c.center });
            }
        }
        let index_sets = IndexSets::from_bcs(cavities.iter().map(|c| c.bc));
        Ok(PerforationLayout { epsilon, eta, cavities, index_sets, radii, outer_domain })
    }

    /// The physical length scale εη of every cavity.
    pub fn cavity_scale(&self) -> f64 {
        self.epsilon * self.eta
    }

    /// Closed boundary polygon of cavity `k` in physical coordinates, counterclockwise.
    pub fn cavity_polygon(&self, k: usize, divisions: usize) -> Vec<Point> {
        let c = &self.cavities[k];
        let s = self.cavity_scale();
        c.reference_shape
            .boundary_points(divisions)
            .into_iter()
            .map(|p| [c.center[0] + s * p[0], c.center[1] + s * p[1]])
            .collect()
    }

    pub fn cavity_area(&self, k: usize) -> f64 {
        self.cavities[k].reference_shape.area() * self.cavity_scale().powi(2)
    }

    /// Scales centres, ε and the outer domain by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.epsilon *= s;
        out.outer_domain = self.outer_domain.scaled(s);
        for c in &mut out.cavities {
            c.center = [c.center[0] * s, c.center[1] * s];
        }
        out
    }
}

fn validate_scales(epsilon: f64, eta: f64) -> Result<(), GeometryError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(GeometryError::InvalidEpsilon(epsilon));
    }
    if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
        return Err(GeometryError::InvalidEta(eta));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Cell-centred `4ε` lattice, keeping centres at least `εR3` from the outer boundary.
    Periodic,
    Explicit { centers: Vec<Point> },
    /// The periodic lattice with each centre displaced by up to `amplitude·ε` per axis.
    Jittered { amplitude: f64, seed: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BcRule {
    AllDirichlet,
    AllRobin { sign_definite: bool },
    /// Dirichlet above the horizontal midline of the outer domain, Robin below.
    HalfSpace { sign_definite: bool },
    PerCavity { bcs: Vec<CavityBc> },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LayoutConfig {
    pub epsilon: f64,
    pub eta: f64,
    pub generator: Generator,
    #[serde(default)]
    pub shape: ReferenceShape,
    /// Defaults to the ball of radius `R1` at the origin.
    #[serde(default)]
    pub inner_ball: Option<InnerBall>,
    pub bc: BcRule,
    #[serde(default)]
    pub radii: Radii,
    #[serde(default)]
    pub outer: OuterDomain,
}

/// Lattice centres `c + 4ε(k + ½)` of the cell-centred periodic layout that keep a
/// clearance of `εR3` to the outer boundary.
pub fn periodic_centers(epsilon: f64, r3: f64, outer: &OuterDomain) -> Vec<Point> {
    let pitch = 4.0 * epsilon;
    let (lo, hi) = outer.bounding_box();
    let count = |w: f64| ((w / pitch) + 1e-9).floor() as i64;
    let (nx, ny) = (count(hi[0] - lo[0]), count(hi[1] - lo[1]));
    // Centre the lattice in the bounding box so that the leftover margin is symmetric.
    let ox = lo[0] + 0.5 * ((hi[0] - lo[0]) - nx as f64 * pitch);
    let oy = lo[1] + 0.5 * ((hi[1] - lo[1]) - ny as f64 * pitch);
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let p = [ox + pitch * (i as f64 + 0.5), oy + pitch * (j as f64 + 0.5)];
            if outer.distance_to_boundary(p) >= r3 * epsilon * (1.0 - RATIO_SLACK) {
                out.push(p);
            }
        }
    }
    out
}

pub fn build_layout(config: &LayoutConfig) -> Result<PerforationLayout, GeometryError> {
    validate_scales(config.epsilon, config.eta)?;
    config.radii.validate()?;
    config.outer.validate()?;
    let eps = config.epsilon;
    let centers: Vec<Point> = match &config.generator {
        Generator::Periodic => periodic_centers(eps, config.radii.r3, &config.outer),
        Generator::Explicit { centers } => centers.clone(),
        Generator::Jittered { amplitude, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            periodic_centers(eps, config.radii.r3, &config.outer)
                .into_iter()
                .map(|p| {
                    let dx: f64 = rng.random_range(-1.0..=1.0);
                    let dy: f64 = rng.random_range(-1.0..=1.0);
                    [p[0] + amplitude * eps * dx, p[1] + amplitude * eps * dy]
                })
                .collect()
        }
    };
    if centers.is_empty() {
        return Err(GeometryError::EmptyLayout);
    }
    let (lo, hi) = config.outer.bounding_box();
    let mid_y = 0.5 * (lo[1] + hi[1]);
    let bcs: Vec<CavityBc> = match &config.bc {
        BcRule::AllDirichlet => vec![CavityBc::Dirichlet; centers.len()],
        BcRule::AllRobin { sign_definite } => {
            vec![CavityBc::Robin { sign_definite: *sign_definite }; centers.len()]
        }
        BcRule::HalfSpace { sign_definite } => centers
            .iter()
            .map(|c| {
                if c[1] > mid_y {
                    CavityBc::Dirichlet
                } else {
                    CavityBc::Robin { sign_definite: *sign_definite }
                }
            })
            .collect(),
        BcRule::PerCavity { bcs } => {
            if bcs.len() != centers.len() {
                return Err(GeometryError::BcCountMismatch { expected: centers.len(), got: bcs.len() });
            }
            bcs.clone()
        }
    };
    let inner = config
        .inner_ball
        .unwrap_or(InnerBall { center: [0.0, 0.0], radius: config.radii.r1 });
    let cavities = centers
        .into_iter()
        .zip(bcs)
        .map(|(center, bc)| CavitySpec {
            center,
            reference_shape: config.shape.clone(),
            inner_ball: inner,
            bc,
        })
        .collect();
    PerforationLayout::new(config.epsilon, config.eta, cavities, config.radii, config.outer)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Connectedness {
    /// Guaranteed by the shape class (disk or verified star-shaped polygon).
    ByConstruction,
    /// Polygon not verified star-shaped about its inner-ball centre.
    Unverified,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InclusionCheck {
    pub cavity: usize,
    /// `ω ⊆ B_{R2}(0)`.
    pub outer_ok: bool,
    /// `B_{R1}(y) ⊆ ω` with the inner-ball radius at least `R1`.
    pub inner_ok: bool,
    pub connectedness: Connectedness,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SeparationCheck {
    /// Minimum pairwise centre distance over `2εR3`; absent with fewer than two cavities.
    pub ratio: Option<f64>,
    pub closest_pair: Option<(usize, usize)>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClearanceCheck {
    /// Minimum of `dist(M_k, ∂Ω) / (εR3)`.
    pub ratio: f64,
    pub worst_cavity: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoveringReport {
    pub pass: bool,
    pub pitch: f64,
    pub samples: usize,
    /// Samples must lie within this distance of a qualifying centre.
    pub certified_radius: f64,
    pub worst_point: Point,
    pub worst_distance: f64,
    /// `worst_distance / (εR4)`.
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AlphaBoundCheck {
    pub cavity: usize,
    pub l1: f64,
    pub l2_squared: f64,
    /// `‖α‖²_{L2} / (c2 (εη)^{n-1})`, must not exceed 1.
    pub l2_ratio: f64,
    /// `‖α‖_{L1} / (c3 (εη)^{n-1})`, must be at least 1.
    pub l1_ratio: f64,
    pub negative_weight: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GeometryCheckReport {
    pub a1_inclusions: Vec<InclusionCheck>,
    pub a1_separation: SeparationCheck,
    pub a1_boundary_clearance: ClearanceCheck,
    pub a3_covering: Option<CoveringReport>,
    pub alpha_bounds: Option<Vec<AlphaBoundCheck>>,
}

impl GeometryCheckReport {
    pub fn a1_pass(&self) -> bool {
        self.a1_inclusions.iter().all(|c| c.pass)
            && self.a1_separation.pass
            && self.a1_boundary_clearance.pass
    }

    pub fn pass(&self) -> bool {
        self.a1_pass()
            && self.a3_covering.as_ref().is_none_or(|c| c.pass)
            && self
                .alpha_bounds
                .as_ref()
                .is_none_or(|v| v.iter().all(|a| a.pass))
    }
}

fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

fn inclusion_check(k: usize, c: &CavitySpec, radii: &Radii) -> InclusionCheck {
    let ball = c.inner_ball;
    let radius_ok = ball.radius >= radii.r1 * (1.0 - RATIO_SLACK);
    let (outer_ok, inner_ok, connectedness) = match &c.reference_shape {
        ReferenceShape::Disk { radius } => {
            let outer_ok = *radius <= radii.r2 * (1.0 + RATIO_SLACK);
            let inner_ok = dist(ball.center, [0.0, 0.0]) + ball.radius <= radius * (1.0 + RATIO_SLACK);
            (outer_ok, inner_ok && radius_ok, Connectedness::ByConstruction)
        }
        ReferenceShape::Polygon { vertices, star_shaped } => {
            // The ball is convex, so containing the vertices contains the polygon.
            let outer_ok = vertices
                .iter()
                .all(|v| dist(*v, [0.0, 0.0]) <= radii.r2 * (1.0 + RATIO_SLACK));
            let verts = ccw(vertices);
            let n = verts.len();
            let inside = point_in_polygon(ball.center, &verts);
            let edge_gap = (0..n)
                .map(|i| point_segment_distance(ball.center, verts[i], verts[(i + 1) % n]))
                .fold(f64::INFINITY, f64::min);
            let inner_ok = inside && edge_gap >= ball.radius * (1.0 - RATIO_SLACK) && radius_ok;
            // Star-shaped about the ball centre: every edge is seen counterclockwise from it.
            let star = (0..n).all(|i| cross(sub(verts[i], ball.center), sub(verts[(i + 1) % n], ball.center)) > 0.0);
            let conn = if *star_shaped && star {
                Connectedness::ByConstruction
            } else {
                Connectedness::Unverified
            };
            (outer_ok, inner_ok, conn)
        }
    };
    InclusionCheck {
        cavity: k,
        outer_ok,
        inner_ok,
        connectedness,
        pass: outer_ok && inner_ok && connectedness == Connectedness::ByConstruction,
    }
}

/// Inclusion, separation and boundary-clearance audits. Covering and weight
/// checks are left empty; see [`audit`] for the full report.
pub fn check_assumption_a1(layout: &PerforationLayout) -> GeometryCheckReport {
    let eps = layout.epsilon;
    let r3 = layout.radii.r3;
    let a1_inclusions = layout
        .cavities
        .iter()
        .enumerate()
        .map(|(k, c)| inclusion_check(k, c, &layout.radii))
        .collect();

    let centers: Vec<Point> = layout.cavities.iter().map(|c| c.center).collect();
    let closest = closest_pair(&centers);
    let a1_separation = match closest {
        None => SeparationCheck { ratio: None, closest_pair: None, pass: true },
        Some((i, j, d)) => {
            let ratio = d / (2.0 * eps * r3);
            SeparationCheck { ratio: Some(ratio), closest_pair: Some((i, j)), pass: ratio >= 1.0 - RATIO_SLACK }
        }
    };

    let (worst_cavity, worst) = centers
        .iter()
        .enumerate()
        .map(|(k, &c)| (k, layout.outer_domain.distance_to_boundary(c)))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let ratio = worst.max(0.0) / (eps * r3);
    let a1_boundary_clearance = ClearanceCheck { ratio, worst_cavity, pass: ratio >= 1.0 - RATIO_SLACK };

    GeometryCheckReport {
        a1_inclusions,
        a1_separation,
        a1_boundary_clearance,
        a3_covering: None,
        alpha_bounds: None,
    }
}

/// Uniform bucket grid for nearest-centre queries.
struct Buckets<'a> {
    points: &'a [Point],
    ids: Vec<usize>,
    origin: Point,
    cell: f64,
    nx: i64,
    ny: i64,
    start: Vec<usize>,
}

impl<'a> Buckets<'a> {
    fn new(points: &'a [Point], ids: Vec<usize>, cell: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &i in &ids {
            for d in 0..2 {
                lo[d] = lo[d].min(points[i][d]);
                hi[d] = hi[d].max(points[i][d]);
            }
        }
        let nx = ((hi[0] - lo[0]) / cell).floor() as i64 + 1;
        let ny = ((hi[1] - lo[1]) / cell).floor() as i64 + 1;
        let key = |p: Point| -> usize {
            let ix = (((p[0] - lo[0]) / cell).floor() as i64).clamp(0, nx - 1);
            let iy = (((p[1] - lo[1]) / cell).floor() as i64).clamp(0, ny - 1);
            (iy * nx + ix) as usize
        };
        let mut count = vec![0usize; (nx * ny) as usize + 1];
        for &i in &ids {
            count[key(points[i]) + 1] += 1;
        }
        for b in 1..count.len() {
            count[b] += count[b - 1];
        }
        let mut fill = count.clone();
        let mut sorted = vec![0; ids.len()];
        for &i in &ids {
            let b = key(points[i]);
            sorted[fill[b]] = i;
            fill[b] += 1;
        }
        Buckets { points, ids: sorted, origin: lo, cell, nx, ny, start: count }
    }

    /// Nearest point by expanding rings of buckets.
    fn nearest(&self, p: Point) -> (usize, f64) {
        let fx = ((p[0] - self.origin[0]) / self.cell).floor() as i64;
        let fy = ((p[1] - self.origin[1]) / self.cell).floor() as i64;
        let cx = fx.clamp(0, self.nx - 1);
        let cy = fy.clamp(0, self.ny - 1);
        let mut best = (usize::MAX, f64::INFINITY);
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            for iy in (cy - ring)..=(cy + ring) {
                for ix in (cx - ring)..=(cx + ring) {
                    if (iy - cy).abs() != ring && (ix - cx).abs() != ring {
                        continue;
                    }
                    if ix < 0 || iy < 0 || ix >= self.nx || iy >= self.ny {
                        continue;
                    }
                    let b = (iy * self.nx + ix) as usize;
                    for &i in &self.ids[self.start[b]..self.start[b + 1]] {
                        let d = dist(p, self.points[i]);
                        if d < best.1 || (d == best.1 && i < best.0) {
                            best = (i, d);
                        }
                    }
                }
            }
            // Everything not yet visited lies at least `ring` cells away from p.
            if best.1 <= ring as f64 * self.cell {
                break;
            }
        }
        best
    }
}

fn closest_pair(centers: &[Point]) -> Option<(usize, usize, f64)> {
    if centers.len() < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by(|&a, &b| centers[a][0].total_cmp(&centers[b][0]).then(a.cmp(&b)));
    let mut best = (0, 0, f64::INFINITY);
    // Sweep in x; only pairs closer in x than the current best can improve it.
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if centers[j][0] - centers[i][0] > best.2 {
                break;
            }
            let d = dist(centers[i], centers[j]);
            if d < best.2 {
                best = (i.min(j), i.max(j), d);
            }
        }
    }
    Some(best)
}

/// Default covering pitch as a fraction of `εR4`.
///
/// With the full grid diagonal as the certification margin, a pitch of `εR4/8`
/// leaves no room to certify the `4ε` lattice with `R4 = 3` (slack `3 − 2√2 ≈ 0.17`
/// in units of ε), so the default is four times finer.
pub const DEFAULT_COVERING_PITCH_FRACTION: f64 = 1.0 / 32.0;

/// Certified covering audit on a sampling grid.
///
/// Every point of Ω lies within half a grid diagonal of a sample; the test demands each
/// sample lie within `εR4 − diagonal` of a qualifying centre, which is conservative.
pub fn check_covering(layout: &PerforationLayout, pitch: Option<f64>) -> Result<CoveringReport, GeometryError> {
    let ids = layout.index_sets.covering_centers();
    if ids.is_empty() {
        return Err(GeometryError::NoQualifyingCavity);
    }
    let reach = layout.epsilon * layout.radii.r4;
    let pitch = pitch.unwrap_or(reach * DEFAULT_COVERING_PITCH_FRACTION);
    if !(pitch > 0.0) || pitch > reach / 2.0 {
        return Err(GeometryError::PitchTooCoarse { pitch, max: reach / 2.0 });
    }
    let centers: Vec<Point> = layout.cavities.iter().map(|c| c.center).collect();
    let buckets = Buckets::new(&centers, ids, reach.max(1e-300));

    let (lo, hi) = layout.outer_domain.bounding_box();
    let nx = (((hi[0] - lo[0]) / pitch).ceil() as usize).max(1);
    let ny = (((hi[1] - lo[1]) / pitch).ceil() as usize).max(1);
    let (hx, hy) = ((hi[0] - lo[0]) / nx as f64, (hi[1] - lo[1]) / ny as f64);
    let diag = hx.hypot(hy);
    let certified = reach - diag;

    let mut samples = 0;
    let mut worst = ([0.0, 0.0], f64::NEG_INFINITY);
    for j in 0..=ny {
        for i in 0..=nx {
            let p = [lo[0] + i as f64 * hx, lo[1] + j as f64 * hy];
            // Keep grid nodes whose cells can meet Ω.
            if layout.outer_domain.distance_to_boundary(p) < -diag {
                continue;
            }
            samples += 1;
            let (_, d) = buckets.nearest(p);
            if d > worst.1 {
                worst = (p, d);
            }
        }
    }
    Ok(CoveringReport {
        pass: worst.1 <= certified,
        pitch,
        samples,
        certified_radius: certified,
        worst_point: worst.0,
        worst_distance: worst.1,
        worst_ratio: worst.1 / reach,
    })
}

/// Boundary-quadrature norms of the Robin weights on every sign-definite cavity.
pub fn check_alpha_bounds(
    layout: &PerforationLayout,
    robin: &RobinModel,
    quadrature_order: usize,
) -> Result<Vec<AlphaBoundCheck>, GeometryError> {
    if layout.index_sets.robin_definite.is_empty() {
        return Ok(Vec::new());
    }
    let alpha = robin.alpha.as_ref().ok_or(GeometryError::MissingAlpha)?;
    let (gx, gw) = gauss_legendre(quadrature_order.max(1));
    let scale = layout.cavity_scale();
    let n = 2;
    let denom = scale.powi(n - 1);
    let mut out = Vec::new();
    for &k in &layout.index_sets.robin_definite {
        let cav = &layout.cavities[k];
        let (mut l1, mut l2, mut negative) = (0.0, 0.0, false);
        let mut add = |x: Point, w: f64| {
            let a = alpha(k, x);
            if a < 0.0 || !a.is_finite() {
                negative = true;
            }
            l1 += w * a.abs();
            l2 += w * a * a;
        };
        match &cav.reference_shape {
            ReferenceShape::Disk { radius } => {
                // Composite Gauss on angular panels: the integrand is smooth and periodic.
                let r = radius * scale;
                let panels = 64;
                let dt = 2.0 * PI / panels as f64;
                for p in 0..panels {
                    for (x, w) in gx.iter().zip(&gw) {
                        let t = dt * (p as f64 + 0.5 * (x + 1.0));
                        add([cav.center[0] + r * t.cos(), cav.center[1] + r * t.sin()], 0.5 * dt * w * r);
                    }
                }
            }
            ReferenceShape::Polygon { vertices, .. } => {
                let m = vertices.len();
                for i in 0..m {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % m];
                    let pa = [cav.center[0] + scale * a[0], cav.center[1] + scale * a[1]];
                    let pb = [cav.center[0] + scale * b[0], cav.center[1] + scale * b[1]];
                    let len = dist(pa, pb);
                    for (x, w) in gx.iter().zip(&gw) {
                        let t = 0.5 * (x + 1.0);
                        add([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])], 0.5 * len * w);
                    }
                }
            }
        }
        let l2_ratio = l2 / (robin.c2 * denom);
        let l1_ratio = l1 / (robin.c3 * denom);
        out.push(AlphaBoundCheck {
            cavity: k,
            l1,
            l2_squared: l2,
            l2_ratio,
            l1_ratio,
            negative_weight: negative,
            pass: !negative && l2_ratio <= 1.0 + RATIO_SLACK && l1_ratio >= 1.0 - RATIO_SLACK,
        });
    }
    Ok(out)
}

/// The full audit: A1 checks, covering (when a qualifying cavity exists) and weights.
pub fn audit(
    layout: &PerforationLayout,
    robin: Option<&RobinModel>,
    pitch: Option<f64>,
) -> Result<GeometryCheckReport, GeometryError> {
    let mut report = check_assumption_a1(layout);
    if !layout.index_sets.covering_centers().is_empty() {
        report.a3_covering = Some(check_covering(layout, pitch)?);
    }
    if let Some(robin) = robin {
        if !layout.index_sets.robin_definite.is_empty() {
            report.alpha_bounds = Some(check_alpha_bounds(layout, robin, 4)?);
        }
    }
    Ok(report)
}

/// The logarithmic factor: `|ln η| + 1` in two dimensions and 1 above.
pub fn kappa(eta: f64, n: usize) -> Result<f64, GeometryError> {
    if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
        return Err(GeometryError::InvalidEta(eta));
    }
    match n {
        0 | 1 => Err(GeometryError::InvalidDimension(n)),
        2 => Ok(eta.ln().abs() + 1.0),
        _ => Ok(1.0),
    }
}

/// `(θ1, θ2) = (ε η^{1-n} µ^{-1}, ε² η^{2-n} ϰ)`.
pub fn smallness_indicators(eps: f64, eta: f64, mu: f64, n: usize) -> Result<(f64, f64), GeometryError> {
    validate_scales(eps, eta)?;
    if !(mu.is_finite() && mu >= 1.0) {
        return Err(GeometryError::InvalidMu(mu));
    }
    let k = kappa(eta, n)?;
    let n = n as i32;
    Ok((eps * eta.powi(1 - n) / mu, eps * eps * eta.powi(2 - n) * k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn periodic(eps: f64, eta: f64) -> LayoutConfig {
        LayoutConfig {
            epsilon: eps,
            eta,
            generator: Generator::Periodic,
            shape: ReferenceShape::Disk { radius: 1.0 },
            inner_ball: None,
            bc: BcRule::AllDirichlet,
            radii: Radii::default(),
            outer: OuterDomain::default(),
        }
    }

    fn explicit(eps: f64, centers: Vec<Point>) -> LayoutConfig {
        LayoutConfig { generator: Generator::Explicit { centers }, ..periodic(eps, 0.5) }
    }

    #[test]
    fn periodic_lattice_on_unit_box() {
        let l = build_layout(&periodic(0.125, 0.5)).unwrap();
        // Independent enumeration: lattice points c = 4ε(k + ½) with clearance ≥ 1.9ε.
        let eps = 0.125;
        let mut expected = Vec::new();
        for i in -4i32..8 {
            for j in -4i32..8 {
                let p = [4.0 * eps * (i as f64 + 0.5), 4.0 * eps * (j as f64 + 0.5)];
                let clear = p[0].min(1.0 - p[0]).min(p[1]).min(1.0 - p[1]);
                if clear >= 1.9 * eps {
                    expected.push(p);
                }
            }
        }
        assert_eq!(expected.len(), 4);
        assert_eq!(l.cavities.len(), 4);
        for c in &l.cavities {
            assert!(expected.iter().any(|e| dist(*e, c.center) < 1e-14));
        }
        assert_relative_eq!(l.cavity_scale(), 1.0 / 16.0);
        assert_eq!(l.index_sets.dirichlet, vec![0, 1, 2, 3]);
    }

    #[test]
    fn explicit_single_and_errors() {
        let l = build_layout(&explicit(0.1, vec![[0.5, 0.5]])).unwrap();
        assert_eq!(l.cavities.len(), 1);
        assert_eq!(l.cavities[0].center, [0.5, 0.5]);

        assert!(matches!(build_layout(&periodic(0.1, 1.5)), Err(GeometryError::InvalidEta(_))));
        assert!(matches!(build_layout(&periodic(0.0, 0.5)), Err(GeometryError::InvalidEpsilon(_))));
        assert!(matches!(build_layout(&periodic(-1.0, 0.5)), Err(GeometryError::InvalidEpsilon(_))));
        assert_eq!(build_layout(&explicit(0.1, vec![])), Err(GeometryError::EmptyLayout));
        assert!(matches!(
            build_layout(&explicit(0.1, vec![[2.0, 0.5]])),
            Err(GeometryError::CenterOutside { index: 0, .. })
        ));
    }

    #[test]
    fn jitter_is_deterministic() {
        let cfg = LayoutConfig {
            generator: Generator::Jittered { amplitude: 0.1, seed: 7 },
            ..periodic(1.0 / 16.0, 0.5)
        };
        let a = build_layout(&cfg).unwrap();
        let b = build_layout(&cfg).unwrap();
        assert_eq!(a, b);
        let other = LayoutConfig {
            generator: Generator::Jittered { amplitude: 0.1, seed: 8 },
            ..cfg
        };
        assert_ne!(a, build_layout(&other).unwrap());
    }

    #[test]
    fn half_space_assignment() {
        let cfg = LayoutConfig { bc: BcRule::HalfSpace { sign_definite: true }, ..periodic(1.0 / 16.0, 0.5) };
        let l = build_layout(&cfg).unwrap();
        for c in &l.cavities {
            let expect = if c.center[1] > 0.5 { CavityBc::Dirichlet } else { CavityBc::Robin { sign_definite: true } };
            assert_eq!(c.bc, expect);
        }
        assert!(l.index_sets.is_partition_of(l.cavities.len()));
        assert!(!l.index_sets.dirichlet.is_empty() && !l.index_sets.robin_definite.is_empty());
    }

    #[test]
    fn separation_examples() {
        let l = build_layout(&periodic(1.0 / 16.0, 0.5)).unwrap();
        let r = check_assumption_a1(&l);
        assert!(r.a1_separation.pass);
        assert_relative_eq!(r.a1_separation.ratio.unwrap(), 4.0 / 3.8, epsilon = 1e-12);
        assert!(r.a1_pass());

        let eps = 0.05;
        let l = build_layout(&explicit(eps, vec![[0.4, 0.5], [0.4 + 3.0 * eps, 0.5]])).unwrap();
        let r = check_assumption_a1(&l);
        assert!(!r.a1_separation.pass);
        assert_relative_eq!(r.a1_separation.ratio.unwrap(), 3.0 / 3.8, epsilon = 1e-12);
        assert_eq!(r.a1_separation.closest_pair, Some((0, 1)));
    }

    #[test]
    fn concentric_disk_inclusion() {
        let cfg = LayoutConfig {
            shape: ReferenceShape::Disk { radius: 1.0 },
            ..explicit(0.1, vec![[0.5, 0.5]])
        };
        let r = check_assumption_a1(&build_layout(&cfg).unwrap());
        assert!(r.a1_inclusions[0].pass);

        let too_big = LayoutConfig { shape: ReferenceShape::Disk { radius: 1.2 }, ..cfg.clone() };
        let r = check_assumption_a1(&build_layout(&too_big).unwrap());
        assert!(!r.a1_inclusions[0].outer_ok);

        let small_ball = LayoutConfig {
            inner_ball: Some(InnerBall { center: [0.0, 0.0], radius: 0.3 }),
            ..cfg
        };
        let r = check_assumption_a1(&build_layout(&small_ball).unwrap());
        assert!(!r.a1_inclusions[0].inner_ok);
    }

    #[test]
    fn polygon_inclusion_and_star_shape() {
        let square = vec![[-0.7, -0.7], [0.7, -0.7], [0.7, 0.7], [-0.7, 0.7]];
        let cfg = LayoutConfig {
            shape: ReferenceShape::Polygon { vertices: square, star_shaped: true },
            ..explicit(0.1, vec![[0.5, 0.5]])
        };
        let r = check_assumption_a1(&build_layout(&cfg).unwrap());
        assert!(r.a1_inclusions[0].pass, "{:?}", r.a1_inclusions[0]);

        // A concave "C" shape is not star-shaped about the origin.
        let c_shape = vec![
            [-0.6, -0.6], [0.6, -0.6], [0.6, -0.3], [-0.3, -0.3],
            [-0.3, 0.3], [0.6, 0.3], [0.6, 0.6], [-0.6, 0.6],
        ];
        let cfg = LayoutConfig {
            shape: ReferenceShape::Polygon { vertices: c_shape, star_shaped: false },
            inner_ball: Some(InnerBall { center: [-0.45, 0.0], radius: 0.5 }),
            ..cfg
        };
        let r = check_assumption_a1(&build_layout(&cfg).unwrap());
        assert_eq!(r.a1_inclusions[0].connectedness, Connectedness::Unverified);
        assert!(!r.a1_inclusions[0].pass);

        let bowtie = vec![[0.0, 0.0], [0.5, 0.5], [0.5, 0.0], [0.0, 0.5]];
        let cfg = LayoutConfig {
            shape: ReferenceShape::Polygon { vertices: bowtie, star_shaped: true },
            ..explicit(0.1, vec![[0.5, 0.5]])
        };
        assert!(matches!(build_layout(&cfg), Err(GeometryError::InvalidShape(_))));
    }

    #[test]
    fn covering_examples() {
        let l = build_layout(&periodic(1.0 / 16.0, 0.5)).unwrap();
        let r = check_covering(&l, None).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.pitch <= l.epsilon * 3.0 / 8.0);
        // The worst point is near a lattice cell corner at 2√2ε.
        assert!(r.worst_distance <= 2.0 * 2f64.sqrt() * l.epsilon + 1e-12);

        let mut l1 = l.clone();
        l1.radii.r4 = 1.0;
        assert!(!check_covering(&l1, None).unwrap().pass);

        let single = build_layout(&LayoutConfig {
            outer: OuterDomain::Box { min: [0.0, 0.0], max: [4.0, 4.0] },
            ..explicit(0.1, vec![[2.0, 2.0]])
        })
        .unwrap();
        let r = check_covering(&single, None).unwrap();
        assert!(!r.pass);
        let corners = [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0], [4.0, 4.0]];
        assert!(corners.iter().any(|c| dist(*c, r.worst_point) < 1e-12), "{:?}", r.worst_point);
        assert_relative_eq!(r.worst_distance, 2.0 * 2f64.sqrt(), epsilon = 1e-12);

        assert!(matches!(
            check_covering(&l, Some(l.epsilon * 3.0 * 0.6)),
            Err(GeometryError::PitchTooCoarse { .. })
        ));
        let robin_only = build_layout(&LayoutConfig {
            bc: BcRule::AllRobin { sign_definite: false },
            ..periodic(1.0 / 16.0, 0.5)
        })
        .unwrap();
        assert_eq!(check_covering(&robin_only, None), Err(GeometryError::NoQualifyingCavity));
    }

    #[test]
    fn covering_on_disk_domain() {
        let cfg = LayoutConfig {
            outer: OuterDomain::Disk { center: [0.0, 0.0], radius: 1.0 },
            ..periodic(1.0 / 16.0, 0.5)
        };
        let l = build_layout(&cfg).unwrap();
        let r = check_assumption_a1(&l);
        assert!(r.a1_boundary_clearance.pass);
        // The clearance filter leaves a rim near the circle that R4 = 3 cannot reach.
        let cov = check_covering(&l, None).unwrap();
        let mut big = l.clone();
        big.radii.r4 = 8.0;
        assert!(check_covering(&big, None).unwrap().pass);
        assert!(cov.worst_distance > 0.0);
    }

    fn robin_with_alpha(alpha: impl Fn(usize, Point) -> f64 + Send + Sync + 'static, c2: f64, c3: f64) -> RobinModel {
        let mut r = RobinModel::linear(1.0);
        r.alpha = Some(std::sync::Arc::new(alpha));
        r.c2 = c2;
        r.c3 = c3;
        r
    }

    #[test]
    fn alpha_bound_examples() {
        let cfg = LayoutConfig {
            bc: BcRule::AllRobin { sign_definite: true },
            ..explicit(0.2, vec![[0.5, 0.5]])
        };
        let l = build_layout(&cfg).unwrap();
        let r = l.cavity_scale();

        let res = check_alpha_bounds(&l, &robin_with_alpha(|_, _| 1.0, 10.0, 1.0), 3).unwrap();
        assert_relative_eq!(res[0].l1, 2.0 * PI * r, max_relative = 1e-12);
        assert_relative_eq!(res[0].l1_ratio, 2.0 * PI, max_relative = 1e-12);
        assert!(res[0].pass);

        let res = check_alpha_bounds(&l, &robin_with_alpha(|_, _| 0.0, 1.0, 1.0), 3).unwrap();
        assert_eq!(res[0].l1_ratio, 0.0);
        assert!(!res[0].pass);

        let c = l.cavities[0].center;
        let cosine = move |_: usize, x: Point| 1.0 + (x[1] - c[1]).atan2(x[0] - c[0]).cos();
        let (c2, c3) = (12.0, 2.0);
        let res = check_alpha_bounds(&l, &robin_with_alpha(cosine, c2, c3), 4).unwrap();
        assert_relative_eq!(res[0].l1, 2.0 * PI * r, max_relative = 1e-12);
        assert_relative_eq!(res[0].l2_squared, 3.0 * PI * r, max_relative = 1e-12);
        assert_relative_eq!(res[0].l2_ratio, 3.0 * PI / c2, max_relative = 1e-12);
        assert_relative_eq!(res[0].l1_ratio, 2.0 * PI / c3, max_relative = 1e-12);

        let res = check_alpha_bounds(&l, &robin_with_alpha(|_, x| x[0] - 0.5, 100.0, 0.001), 3).unwrap();
        assert!(res[0].negative_weight && !res[0].pass);
    }

    #[test]
    fn kappa_and_indicators() {
        assert_eq!(kappa(1.0, 2).unwrap(), 1.0);
        assert_relative_eq!(kappa((-1f64).exp(), 2).unwrap(), 2.0, epsilon = 1e-15);
        assert_eq!(kappa(0.1, 3).unwrap(), 1.0);
        assert!(kappa(0.0, 2).is_err());
        assert!(kappa(-0.5, 2).is_err());

        let (t1, t2) = smallness_indicators(0.1, 1.0, 1.0, 2).unwrap();
        assert_relative_eq!(t1, 0.1);
        assert_relative_eq!(t2, 0.01, max_relative = 1e-15);
        let (t1, t2) = smallness_indicators(0.1, 1.0, 10.0, 2).unwrap();
        assert_relative_eq!(t1, 0.01, max_relative = 1e-15);
        assert_relative_eq!(t2, 0.01, max_relative = 1e-15);
        assert!(matches!(smallness_indicators(0.1, 1.0, 0.5, 2), Err(GeometryError::InvalidMu(_))));
    }

    fn verdicts(l: &PerforationLayout) -> (bool, bool, bool, bool) {
        let a1 = check_assumption_a1(l);
        let cov = check_covering(l, None).unwrap().pass;
        (
            a1.a1_inclusions.iter().all(|c| c.pass),
            a1.a1_separation.pass,
            a1.a1_boundary_clearance.pass,
            cov,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn scale_covariance(seed in 0u64..1000, amp in 0.0f64..0.6, s in prop::sample::select(vec![0.25, 0.5, 2.0, 4.0, 8.0])) {
            // Power-of-two factors keep the scaled coordinates exact.
            let cfg = LayoutConfig {
                generator: Generator::Jittered { amplitude: amp, seed },
                ..periodic(1.0 / 16.0, 0.5)
            };
            let l = build_layout(&cfg).unwrap();
            prop_assert_eq!(verdicts(&l), verdicts(&l.scaled(s)));
        }

        #[test]
        fn covering_monotone_in_r4(seed in 0u64..1000, r4 in 1.0f64..4.0, grow in 0.0f64..2.0) {
            let cfg = LayoutConfig {
                generator: Generator::Jittered { amplitude: 0.5, seed },
                ..periodic(1.0 / 16.0, 0.5)
            };
            let mut l = build_layout(&cfg).unwrap();
            l.radii.r4 = r4;
            let pitch = Some(l.epsilon * r4 / 32.0);
            let before = check_covering(&l, pitch).unwrap().pass;
            l.radii.r4 = r4 + grow;
            let after = check_covering(&l, pitch).unwrap().pass;
            prop_assert!(!before || after);
        }

        #[test]
        fn separation_monotone_in_r3(seed in 0u64..1000, r3 in 1.05f64..2.5, grow in 0.0f64..1.0) {
            let cfg = LayoutConfig {
                generator: Generator::Jittered { amplitude: 0.8, seed },
                ..periodic(1.0 / 16.0, 0.5)
            };
            let mut l = build_layout(&cfg).unwrap();
            l.radii.r3 = r3;
            let before = check_assumption_a1(&l).a1_separation.pass;
            l.radii.r3 = r3 + grow;
            let after = check_assumption_a1(&l).a1_separation.pass;
            prop_assert!(before || !after);
        }

        #[test]
        fn certified_pass_survives_halved_pitch(seed in 0u64..1000, amp in 0.0f64..0.4, r4 in 2.9f64..3.5) {
            let cfg = LayoutConfig {
                generator: Generator::Jittered { amplitude: amp, seed },
                ..periodic(1.0 / 16.0, 0.5)
            };
            let mut l = build_layout(&cfg).unwrap();
            l.radii.r4 = r4;
            let pitch = l.epsilon * r4 / 32.0;
            let coarse = check_covering(&l, Some(pitch)).unwrap();
            if coarse.pass {
                let fine = check_covering(&l, Some(pitch / 2.0)).unwrap();
                prop_assert!(fine.pass);
            }
        }

        #[test]
        fn disk_inclusion_matches_closed_form(rho in 0.3f64..1.4, yx in -0.5f64..0.5, yy in -0.5f64..0.5, rin in 0.3f64..0.9) {
            let cfg = LayoutConfig {
                shape: ReferenceShape::Disk { radius: rho },
                inner_ball: Some(InnerBall { center: [yx, yy], radius: rin }),
                ..explicit(0.1, vec![[0.5, 0.5]])
            };
            let l = build_layout(&cfg).unwrap();
            let c = &check_assumption_a1(&l).a1_inclusions[0];
            let radii = Radii::default();
            let exact_outer = rho <= radii.r2;
            let exact_inner = rin >= radii.r1 && yx.hypot(yy) + rin <= rho;
            prop_assert_eq!(c.outer_ok, exact_outer);
            prop_assert_eq!(c.inner_ok, exact_inner);
        }
    }
}

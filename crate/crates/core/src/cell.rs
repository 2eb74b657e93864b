//! Periodic cell problems on `□ \ B_η(0)`, `□ = (−2, 2)²`, the radial auxiliary
//! problem around a single cavity, and the periodic averaging of cell fields.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{
    self, assemble, lumped_boundary_mass, norms, CoefficientField, FeSpace, FemError, Norms, ProblemData, RobinModel,
    SolverOptions,
};
use crate::mesh::{annulus, periodic_cell, refine_uniform, BoundaryTag, Locator, Mesh, MeshError};
use crate::quadrature::{gauss_legendre, triangle_degree5};
use crate::sparse::{norm2, DirectSolver};
use crate::{cross, sub, Point};

#[derive(Debug, Error)]
pub enum CellError {
    #[error("hole radius η = {0} must lie in (0, 2)")]
    InvalidEta(f64),
    #[error("εµ = {0} must be positive and finite")]
    InvalidEpsMu(f64),
    #[error("G_n needs t > 0, got {0}")]
    InvalidArgument(f64),
    #[error("dimension {0} is not supported")]
    InvalidDimension(usize),
    #[error("cell fields live on different meshes or hole radii")]
    MeshMismatch,
    #[error("discrete compatibility residual {0:e} exceeds tolerance")]
    Compatibility(f64),
    #[error("support radius {radius} holds only {periods:.2} periods of size 4ε; at least 4 are needed")]
    SupportTooSmall { radius: f64, periods: f64 },
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

impl From<crate::sparse::LinearError> for CellError {
    fn from(e: crate::sparse::LinearError) -> Self {
        CellError::Fem(FemError::Linear(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum CellProblem {
    V0,
    X,
    V1,
    V2,
    VMu { epsmu: f64 },
}

/// Cell mesh resolution: angular divisions of the hole (a multiple of 8) and
/// uniform refinements applied afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellParams {
    pub n_theta: usize,
    pub refinements: usize,
}

impl Default for CellParams {
    fn default() -> Self {
        CellParams { n_theta: 96, refinements: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct CellField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
    pub eta: f64,
    pub problem: CellProblem,
    pub norms: Norms,
}

impl CellField {
    fn new(mesh: Arc<Mesh>, values: Vec<f64>, eta: f64, problem: CellProblem) -> Self {
        let norms = norms(&mesh, &values);
        CellField { mesh, values, eta, problem, norms }
    }

    /// `∫ v dξ` over the meshed cell.
    pub fn integral(&self) -> f64 {
        integral(&self.mesh, &self.values)
    }

    /// Mean over the hole boundary with the lumped edge rule (exact for P1 traces).
    pub fn boundary_mean(&self) -> f64 {
        let b = lumped_boundary_mass(&self.mesh, is_hole);
        let total: f64 = b.iter().sum();
        b.iter().zip(&self.values).map(|(w, v)| w * v).sum::<f64>() / total
    }

    /// `∮ v ds` over the hole boundary.
    pub fn boundary_integral(&self) -> f64 {
        lumped_boundary_mass(&self.mesh, is_hole).iter().zip(&self.values).map(|(w, v)| w * v).sum()
    }

    /// Largest difference between identified periodic vertices.
    pub fn periodicity_defect(&self) -> f64 {
        let rep = self.mesh.periodic_representatives();
        rep.iter().enumerate().map(|(i, &r)| (self.values[i] - self.values[r]).abs()).fold(0.0, f64::max)
    }

    pub fn same_mesh(&self, other: &CellField) -> bool {
        self.eta == other.eta
            && (Arc::ptr_eq(&self.mesh, &other.mesh)
                || (self.mesh.vertices == other.mesh.vertices && self.mesh.triangles == other.mesh.triangles))
    }
}

fn is_hole(tag: BoundaryTag) -> bool {
    tag.cavity().is_some()
}

fn integral(mesh: &Mesh, values: &[f64]) -> f64 {
    mesh.triangles
        .iter()
        .enumerate()
        .map(|(t, tri)| mesh.triangle_area(t) * (values[tri[0]] + values[tri[1]] + values[tri[2]]) / 3.0)
        .sum()
}

fn check_eta(eta: f64) -> Result<(), CellError> {
    if eta.is_finite() && eta > 0.0 && eta < 2.0 {
        Ok(())
    } else {
        Err(CellError::InvalidEta(eta))
    }
}

fn cell_mesh(eta: f64, params: &CellParams, hole: BoundaryTag) -> Result<Arc<Mesh>, CellError> {
    check_eta(eta)?;
    let mut m = periodic_cell(eta, params.n_theta, None, hole)?;
    for _ in 0..params.refinements {
        m = refine_uniform(&m);
    }
    Ok(Arc::new(m))
}

/// `−Δv0 = 1`, `v0 = 0` on `∂B_η`, periodic on `□`.
pub fn solve_v0(eta: f64, params: &CellParams) -> Result<CellField, CellError> {
    let mesh = cell_mesh(eta, params, BoundaryTag::CavityDirichlet(0))?;
    let s = fem::solve(&mesh, &CoefficientField::laplacian(), &RobinModel::zero(), &ProblemData::constant(1.0), &SolverOptions::default())?;
    Ok(CellField::new(mesh, s.values, eta, CellProblem::V0))
}

/// `−Δv = 1` with `∂v/∂|ξ| = εµ v` on `∂B_η`, periodic on `□`.
pub fn solve_vmu(eta: f64, epsmu: f64, params: &CellParams) -> Result<CellField, CellError> {
    if !(epsmu.is_finite() && epsmu > 0.0) {
        return Err(CellError::InvalidEpsMu(epsmu));
    }
    let mesh = cell_mesh(eta, params, BoundaryTag::CavityRobin(0))?;
    let s = fem::solve(
        &mesh,
        &CoefficientField::laplacian(),
        &RobinModel::linear(epsmu),
        &ProblemData::constant(1.0),
        &SolverOptions::default(),
    )?;
    Ok(CellField::new(mesh, s.values, eta, CellProblem::VMu { epsmu }))
}

#[derive(Clone, Debug)]
pub struct V1Solution {
    pub field: CellField,
    /// Discrete flux constant: meshed cell area over meshed hole perimeter.
    pub c4: f64,
    pub c4_exact: f64,
    /// `|Σ load| / Σ|load|` after the flux is applied.
    pub compatibility_residual: f64,
}

/// The pure Neumann problem `∫∇v·∇w = ∫ w − ∮ g w` on the cell, solved with
/// one pinned unknown and shifted to zero mean on the hole boundary.
fn neumann_cell_solve(mesh: &Mesh, load: &[f64]) -> Result<Vec<f64>, CellError> {
    let space = FeSpace::new(mesh);
    let k = space.restrict_matrix(&assemble(mesh, &CoefficientField::laplacian(), 0.0)?.stiffness);
    let b = space.restrict_vector(load);
    let keep: Vec<usize> = (1..space.n_dofs).collect();
    let reduced = k.submatrix(&keep);
    let rb: Vec<f64> = keep.iter().map(|&i| b[i]).collect();
    let x = DirectSolver::new(&reduced)?.solve(&rb);
    let mut full = vec![0.0; space.n_dofs];
    for (i, v) in keep.iter().zip(x) {
        full[*i] = v;
    }
    let mut values = space.extend(&full);
    let w = lumped_boundary_mass(mesh, is_hole);
    let shift = w.iter().zip(&values).map(|(a, v)| a * v).sum::<f64>() / w.iter().sum::<f64>();
    values.iter_mut().for_each(|v| *v -= shift);
    Ok(values)
}

/// `−Δv1 = 1`, `∂v1/∂|ξ| = c4` on `∂B_η`, periodic, with zero mean on `∂B_η`.
pub fn solve_v1(eta: f64, params: &CellParams) -> Result<V1Solution, CellError> {
    let mesh = cell_mesh(eta, params, BoundaryTag::CavityNeumann(0))?;
    let volume = fem::load_vector(&mesh, &|_| 1.0);
    let boundary = lumped_boundary_mass(&mesh, is_hole);
    let c4 = volume.iter().sum::<f64>() / boundary.iter().sum::<f64>();
    // The outward normal of the cell points into the hole, so the flux enters with a minus sign.
    let load: Vec<f64> = volume.iter().zip(&boundary).map(|(f, b)| f - c4 * b).collect();
    let compatibility = load.iter().sum::<f64>().abs() / load.iter().map(|v| v.abs()).sum::<f64>();
    if compatibility > 1e-10 {
        return Err(CellError::Compatibility(compatibility));
    }
    let values = neumann_cell_solve(&mesh, &load)?;
    Ok(V1Solution {
        field: CellField::new(mesh, values, eta, CellProblem::V1),
        c4,
        c4_exact: c4_exact(eta),
        compatibility_residual: compatibility,
    })
}

/// `−Δv2 = 0`, `∂v2/∂|ξ| = v1` on `∂B_η`, periodic, zero mean on `∂B_η`.
pub fn solve_v2(v1: &CellField) -> Result<CellField, CellError> {
    if v1.problem != CellProblem::V1 {
        return Err(CellError::MeshMismatch);
    }
    let boundary = lumped_boundary_mass(&v1.mesh, is_hole);
    let load: Vec<f64> = boundary.iter().zip(&v1.values).map(|(b, v)| -b * v).collect();
    let scale = load.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    if load.iter().sum::<f64>().abs() > 1e-10 * scale {
        return Err(CellError::Compatibility(load.iter().sum::<f64>().abs() / scale));
    }
    let values = neumann_cell_solve(&v1.mesh, &load)?;
    Ok(CellField::new(v1.mesh.clone(), values, v1.eta, CellProblem::V2))
}

/// `‖v_µ − c4/(εµ) − v1‖_{W¹₂}` over the cell.
pub fn verify_expansion(vmu: &CellField, v1: &CellField, c4: f64, epsmu: f64) -> Result<f64, CellError> {
    if !(epsmu.is_finite() && epsmu > 0.0) {
        return Err(CellError::InvalidEpsMu(epsmu));
    }
    if !vmu.same_mesh(v1) {
        return Err(CellError::MeshMismatch);
    }
    let shift = c4 / epsmu;
    let r: Vec<f64> = vmu.values.iter().zip(&v1.values).map(|(a, b)| a - shift - b).collect();
    Ok(norms(&vmu.mesh, &r).w12)
}

/// `area(□ \ B_η) / perimeter(∂B_η)` for the exact disk.
pub fn c4_exact(eta: f64) -> f64 {
    (16.0 - PI * eta * eta) / (2.0 * PI * eta)
}

/// Surface measure of the unit sphere in `ℝⁿ`.
fn unit_sphere_measure(n: usize) -> f64 {
    // 2π^{n/2}/Γ(n/2) via |S^{n+1}| = 2π/n · |S^{n−1}|.
    let (mut m, start) = if n % 2 == 0 { (2.0 * PI, 2) } else { (4.0 * PI, 3) };
    let mut k = start;
    while k < n {
        m *= 2.0 * PI / k as f64;
        k += 2;
    }
    m
}

/// `G_n(t)`: `(16/2π) ln t` for `n = 2`, `4ⁿ t^{2−n} / ((2 − n)|∂B_1|)` above.
pub fn fundamental_scaling(t: f64, n: usize) -> Result<f64, CellError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(CellError::InvalidArgument(t));
    }
    match n {
        0 | 1 => Err(CellError::InvalidDimension(n)),
        2 => Ok(16.0 / (2.0 * PI) * t.ln()),
        _ => Ok(4f64.powi(n as i32) * t.powi(2 - n as i32) / ((2.0 - n as f64) * unit_sphere_measure(n))),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CellConstants {
    pub eta: f64,
    pub c4: f64,
    pub c4_exact: f64,
    /// Fitted coefficient of `G_2(η)` in `‖∇v0‖²` (reported, not validated).
    pub c5: Option<f64>,
    pub g: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct C5Fit {
    pub etas: Vec<f64>,
    pub gradient_sq: Vec<f64>,
    pub g: Vec<f64>,
    /// Least-squares `c5` in `‖∇v0‖² ≈ c5 G_2(η)`.
    pub c5: f64,
}

pub fn fit_c5(etas: &[f64], params: &CellParams) -> Result<C5Fit, CellError> {
    let fields: Vec<CellField> = etas.par_iter().map(|&e| solve_v0(e, params)).collect::<Result<_, _>>()?;
    let gradient_sq: Vec<f64> = fields.iter().map(|f| f.norms.h1_semi.powi(2)).collect();
    let g: Vec<f64> = etas.iter().map(|&e| fundamental_scaling(e, 2)).collect::<Result<_, _>>()?;
    let c5 = gradient_sq.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / g.iter().map(|b| b * b).sum::<f64>();
    Ok(C5Fit { etas: etas.to_vec(), gradient_sq, g, c5 })
}

#[derive(Clone, Debug)]
pub struct XSolution {
    pub field: CellField,
    pub r5: f64,
    /// `∮_{∂B_{R5}} ∂X/∂r ds` from the discrete gradient.
    pub flux: f64,
    /// `−π(R5² − η²)`.
    pub flux_exact: f64,
}

/// `−ΔX = 1` on `B_{R3} \ B_η`, `X = 0` on the outer circle, `∂X/∂ν = 0` on the hole.
pub fn solve_x(eta: f64, r2: f64, r3: f64, n_theta: usize) -> Result<XSolution, CellError> {
    if !(eta > 0.0 && eta < r2 && r2 < r3) {
        return Err(CellError::InvalidEta(eta));
    }
    let mesh = Arc::new(annulus([0.0, 0.0], eta, r3, n_theta, None, BoundaryTag::CavityNeumann(0), BoundaryTag::OuterDirichlet)?);
    let s = fem::solve(&mesh, &CoefficientField::laplacian(), &RobinModel::zero(), &ProblemData::constant(1.0), &SolverOptions::default())?;
    let r5 = 0.5 * (r2 + r3);
    let locator = Locator::new(&mesh);
    let samples = 8 * n_theta;
    // Radial extent of the ring band containing radius r, probed off the mesh rays.
    let band = |r: f64| -> Result<(f64, f64), CellError> {
        let t = PI / samples as f64;
        let Some((tri, _)) = locator.locate([r * t.cos(), r * t.sin()]) else {
            return Err(CellError::Fem(FemError::InvalidInput("flux circle leaves the mesh".into())));
        };
        let radii = mesh.triangles[tri].map(|i| mesh.vertices[i][0].hypot(mesh.vertices[i][1]));
        Ok((radii.iter().copied().fold(f64::INFINITY, f64::min), radii.iter().copied().fold(0.0, f64::max)))
    };
    let flux_at = |r: f64| -> Result<f64, CellError> {
        let mut flux = 0.0;
        for i in 0..samples {
            // Offset by half a step so samples avoid mesh rays.
            let t = 2.0 * PI * (i as f64 + 0.5) / samples as f64;
            let dir = [t.cos(), t.sin()];
            let Some((tri, _)) = locator.locate([r * dir[0], r * dir[1]]) else {
                return Err(CellError::Fem(FemError::InvalidInput("flux circle leaves the mesh".into())));
            };
            let g = gradient(&mesh, &s.values, tri);
            flux += (g[0] * dir[0] + g[1] * dir[1]) * 2.0 * PI * r / samples as f64;
        }
        Ok(flux)
    };
    // A P1 gradient across a ring band is second-order accurate only at the band's
    // mid-radius, so the flux is taken on the two nearest mid-radii and interpolated.
    let (lo, hi) = band(r5)?;
    let mid = 0.5 * (lo + hi);
    let (nlo, nhi) = if r5 >= mid { band(hi + 1e-9 * hi)? } else { band(lo - 1e-9 * lo)? };
    let other = 0.5 * (nlo + nhi);
    let (fa, fb) = (flux_at(mid)?, flux_at(other)?);
    let flux = if (other - mid).abs() > 0.0 { fa + (fb - fa) * (r5 - mid) / (other - mid) } else { fa };
    Ok(XSolution {
        field: CellField::new(mesh, s.values, eta, CellProblem::X),
        r5,
        flux,
        flux_exact: -PI * (r5 * r5 - eta * eta),
    })
}

/// Constant gradient of the P1 field on triangle `t`.
pub fn gradient(mesh: &Mesh, values: &[f64], t: usize) -> [f64; 2] {
    let tri = mesh.triangles[t];
    let p = tri.map(|i| mesh.vertices[i]);
    let area2 = cross(sub(p[1], p[0]), sub(p[2], p[0]));
    let mut g = [0.0; 2];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[0] += values[tri[i]] * (p[j][1] - p[k][1]) / area2;
        g[1] += values[tri[i]] * (p[k][0] - p[j][0]) / area2;
    }
    g
}

/// Radial bump profiles `A · g(|x − c|²/ρ²)` with support `B_ρ(c)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "power", rename_all = "snake_case")]
pub enum BumpProfile {
    /// `(1 − s)^p`.
    Polynomial(i32),
    /// `exp(1 − 1/(1 − s))`, infinitely smooth.
    Smooth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
    pub profile: BumpProfile,
}

impl Bump {
    /// `(g, g', g'')` in `s`.
    fn profile(&self, s: f64) -> (f64, f64, f64) {
        if s >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        match self.profile {
            BumpProfile::Polynomial(p) => {
                let q = 1.0 - s;
                let pf = p as f64;
                (q.powi(p), -pf * q.powi(p - 1), pf * (pf - 1.0) * q.powi(p - 2))
            }
            BumpProfile::Smooth => {
                let q = 1.0 - s;
                let g = (1.0 - 1.0 / q).exp();
                (g, -g / (q * q), g * (2.0 * s - 1.0) / q.powi(4))
            }
        }
    }

    fn s(&self, x: Point) -> f64 {
        let d = sub(x, self.center);
        (d[0] * d[0] + d[1] * d[1]) / (self.radius * self.radius)
    }

    pub fn value(&self, x: Point) -> f64 {
        self.amplitude * self.profile(self.s(x)).0
    }

    pub fn gradient(&self, x: Point) -> [f64; 2] {
        let (_, g1, _) = self.profile(self.s(x));
        let c = self.amplitude * g1 * 2.0 / (self.radius * self.radius);
        let d = sub(x, self.center);
        [c * d[0], c * d[1]]
    }

    pub fn laplacian(&self, x: Point) -> f64 {
        let s = self.s(x);
        let (_, g1, g2) = self.profile(s);
        let r2 = self.radius * self.radius;
        // |∇s|² = 4 s/ρ², Δs = 4/ρ² in two dimensions.
        self.amplitude * (g2 * 4.0 * s / r2 + g1 * 4.0 / r2)
    }

    /// `∫_{ℝ²} g(s)^power dx = πρ² ∫₀¹ g(s)^power ds`.
    fn radial_integral(&self, power: i32) -> f64 {
        let area = PI * self.radius * self.radius * self.amplitude.powi(power);
        match self.profile {
            BumpProfile::Polynomial(p) => area / (p * power + 1) as f64,
            BumpProfile::Smooth => {
                let (x, w) = gauss_legendre(64);
                area * x.iter().zip(&w).map(|(x, w)| 0.5 * w * self.profile(0.5 * (x + 1.0)).0.powi(power)).sum::<f64>()
            }
        }
    }

    pub fn integral(&self) -> f64 {
        self.radial_integral(1)
    }

    /// `‖h‖²_{L2(ℝ²)}`.
    pub fn l2_squared(&self) -> f64 {
        self.radial_integral(2)
    }
}

/// Subdivision depth for triangles cut by the support circle.
const CUT_DEPTH: u32 = 4;

/// `Σ_m ∫_{4εm + ε(□\B_η)} F(x, v(x/ε), ∇_ξ v(x/ε)) dx` over the lattice cells that
/// meet the disk `B_ρ(c)`; `F` must vanish outside that disk. Cells are summed in a
/// fixed order, so the result is independent of the thread count.
pub fn tile_integrate<const N: usize>(
    field: &CellField,
    eps: f64,
    center: Point,
    radius: f64,
    integrand: impl Fn(Point, f64, [f64; 2]) -> [f64; N] + Sync,
) -> [f64; N] {
    let rule = triangle_degree5();
    let mesh = &*field.mesh;
    let grads: Vec<[f64; 2]> = (0..mesh.triangles.len()).map(|t| gradient(mesh, &field.values, t)).collect();
    let reach = radius + 2.0 * std::f64::consts::SQRT_2 * eps;
    let lo = |c: f64| ((c - reach) / (4.0 * eps)).floor() as i64;
    let hi = |c: f64| ((c + reach) / (4.0 * eps)).ceil() as i64;
    let mut cells = Vec::new();
    for j in lo(center[1])..=hi(center[1]) {
        for i in lo(center[0])..=hi(center[0]) {
            let o = [4.0 * eps * i as f64, 4.0 * eps * j as f64];
            let dx = ((center[0] - o[0]).abs() - 2.0 * eps).max(0.0);
            let dy = ((center[1] - o[1]).abs() - 2.0 * eps).max(0.0);
            if dx * dx + dy * dy < radius * radius {
                cells.push(o);
            }
        }
    }
    let r2 = radius * radius;
    let parts: Vec<[f64; N]> = cells
        .par_iter()
        .map(|o| {
            let mut acc = [0.0; N];
            for (t, tri) in mesh.triangles.iter().enumerate() {
                let x = tri.map(|i| [o[0] + eps * mesh.vertices[i][0], o[1] + eps * mesh.vertices[i][1]]);
                let v = tri.map(|i| field.values[i]);
                let d = x.map(|p| {
                    let q = sub(p, center);
                    q[0] * q[0] + q[1] * q[1]
                });
                let h = max_edge(&x);
                let nearest = d.iter().copied().fold(f64::INFINITY, f64::min).sqrt();
                if nearest > radius + h {
                    continue;
                }
                let inside = d.iter().all(|&q| q <= r2);
                let depth = if inside { 0 } else { CUT_DEPTH };
                integrate_piece(&x, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], &v, grads[t], depth, &rule, &integrand, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = [0.0; N];
    for p in parts {
        for k in 0..N {
            total[k] += p[k];
        }
    }
    total
}

fn max_edge(x: &[Point; 3]) -> f64 {
    crate::dist(x[0], x[1]).max(crate::dist(x[1], x[2])).max(crate::dist(x[2], x[0]))
}

/// Integrates over the sub-triangle with parent barycentric corners `corners`,
/// splitting into four `depth` times.
#[allow(clippy::too_many_arguments)]
fn integrate_piece<const N: usize>(
    x: &[Point; 3],
    corners: [[f64; 3]; 3],
    v: &[f64; 3],
    grad: [f64; 2],
    depth: u32,
    rule: &crate::quadrature::TriangleRule,
    integrand: &impl Fn(Point, f64, [f64; 2]) -> [f64; N],
    acc: &mut [f64; N],
) {
    if depth > 0 {
        let mid = |a: [f64; 3], b: [f64; 3]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
        let [a, b, c] = corners;
        let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
        for piece in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
            integrate_piece(x, piece, v, grad, depth - 1, rule, integrand, acc);
        }
        return;
    }
    let to_point = |l: [f64; 3]| [l[0] * x[0][0] + l[1] * x[1][0] + l[2] * x[2][0], l[0] * x[0][1] + l[1] * x[1][1] + l[2] * x[2][1]];
    let p = corners.map(to_point);
    let area = 0.5 * cross(sub(p[1], p[0]), sub(p[2], p[0]));
    for (q, w) in rule.points.iter().zip(&rule.weights) {
        let l: [f64; 3] = std::array::from_fn(|i| q[0] * corners[0][i] + q[1] * corners[1][i] + q[2] * corners[2][i]);
        let value = l[0] * v[0] + l[1] * v[1] + l[2] * v[2];
        let f = integrand(to_point(l), value, grad);
        for k in 0..N {
            acc[k] += area * w * f[k];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AveragingResult {
    pub lhs: f64,
    pub leading: f64,
    pub error: f64,
}

/// `∫_{Ω^ε} v(x/ε) h(x) dx` against `4⁻² ∫_{□\B_η} v dξ ∫ h dx`.
pub fn averaging_check(v: &CellField, h: &Bump, eps: f64) -> Result<AveragingResult, CellError> {
    let periods = 2.0 * h.radius / (4.0 * eps);
    if !(eps > 0.0) || periods < 4.0 {
        return Err(CellError::SupportTooSmall { radius: h.radius, periods });
    }
    let [lhs] = tile_integrate(v, eps, h.center, h.radius, |x, value, _| [value * h.value(x)]);
    let leading = v.integral() / 16.0 * h.integral();
    Ok(AveragingResult { lhs, leading, error: lhs - leading })
}

/// The relative residual `‖K v − b‖/‖b‖` of a vertex field against a Laplacian
/// cell problem with right-hand side `b` (diagnostic).
pub fn weak_residual(field: &CellField, load: &[f64]) -> Result<f64, CellError> {
    let space = FeSpace::new(&field.mesh);
    let k = space.restrict_matrix(&assemble(&field.mesh, &CoefficientField::laplacian(), 0.0)?.stiffness);
    let r: Vec<f64> = k
        .matvec(&space.gather(&field.values))
        .iter()
        .zip(space.restrict_vector(load))
        .map(|(a, b)| a - b)
        .collect();
    Ok(norm2(&r) / norm2(&space.restrict_vector(load)).max(f64::MIN_POSITIVE))
}

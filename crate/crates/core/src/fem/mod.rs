//! P1 finite elements for the perforated problem: assembly, the nonlinear
//! Robin solve, norms and the local Poincaré constants.

mod poincare;
mod robin;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mesh::{mesh_quality, BoundaryTag, Mesh, MeshError};
use crate::quadrature::{gauss_legendre, triangle_degree2, triangle_degree5, TriangleRule};
use crate::sparse::{cholesky, norm2, smallest_generalized_eigenvalue, CsrMatrix, LinearError, LinearSolver, KRYLOV_THRESHOLD};
use crate::{cross, dist, sub, Point};

pub use poincare::{local_poincare_constant, poincare_constant, PoincareVariant};
pub use robin::{RobinFn, RobinInvariantReport, RobinModel, WeightFn};

#[derive(Debug, Error)]
pub enum FemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("mesh rejected by the quality gate (min angle {min_angle:.3}°, {bad} degenerate triangles)")]
    Quality { min_angle: f64, bad: usize },
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error("nonlinear solve did not converge: {iterations} iterations, last residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("the linearized operator is not coercive (λ above the coercivity bound?)")]
    IndefiniteSystem,
    #[error("non-finite {what} at {at:?}")]
    NonFinite { what: &'static str, at: Point },
    #[error("boundary tag {0} does not occur in the mesh")]
    UnknownTag(BoundaryTag),
    #[error("the averaging region contains no triangles")]
    EmptyRegion,
    #[error("ellipticity fails at {at:?}: ξᵀAξ = {value} < c0|ξ|² = {bound}")]
    Ellipticity { at: Point, value: f64, bound: f64 },
    #[error("eigenvalue probe {min_eig:e} contradicts the analytic coercivity bound λ0 = {lambda0}")]
    ProbeContradiction { lambda0: f64, min_eig: f64 },
    #[error("{0}")]
    InvalidInput(String),
}

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;
/// Boundary data `g(tag, x)` on non-Dirichlet boundary edges.
pub type BoundaryField = Arc<dyn Fn(BoundaryTag, Point) -> f64 + Send + Sync>;

/// Coefficients of `−div(A∇u) + b·∇u + c u`. `None` stands for the identity
/// matrix, zero convection and zero reaction respectively.
#[derive(Clone)]
pub struct CoefficientField {
    pub diffusion: Option<MatrixField>,
    pub convection: Option<VectorField>,
    pub reaction: Option<ScalarField>,
    /// Ellipticity constant of the diffusion matrix.
    pub c0: f64,
    pub diffusion_sup: f64,
    pub convection_sup: f64,
    pub reaction_sup: f64,
    /// Lower bound of the reaction coefficient.
    pub reaction_inf: f64,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("diffusion", &self.diffusion.is_some())
            .field("convection", &self.convection.is_some())
            .field("reaction", &self.reaction.is_some())
            .field("c0", &self.c0)
            .field("convection_sup", &self.convection_sup)
            .field("reaction_inf", &self.reaction_inf)
            .finish()
    }
}

impl Default for CoefficientField {
    fn default() -> Self {
        Self::laplacian()
    }
}

impl CoefficientField {
    pub fn laplacian() -> Self {
        CoefficientField {
            diffusion: None,
            convection: None,
            reaction: None,
            c0: 1.0,
            diffusion_sup: 1.0,
            convection_sup: 0.0,
            reaction_sup: 0.0,
            reaction_inf: 0.0,
        }
    }

    pub fn with_diffusion(mut self, a: impl Fn(Point) -> [[f64; 2]; 2] + Send + Sync + 'static, c0: f64, sup: f64) -> Self {
        self.diffusion = Some(Arc::new(a));
        self.c0 = c0;
        self.diffusion_sup = sup;
        self
    }

    pub fn with_convection(mut self, b: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static, sup: f64) -> Self {
        self.convection = Some(Arc::new(b));
        self.convection_sup = sup;
        self
    }

    pub fn with_reaction(mut self, c: impl Fn(Point) -> f64 + Send + Sync + 'static, inf: f64, sup: f64) -> Self {
        self.reaction = Some(Arc::new(c));
        self.reaction_inf = inf;
        self.reaction_sup = sup;
        self
    }

    /// Constant reaction `c`.
    pub fn with_constant_reaction(self, c: f64) -> Self {
        self.with_reaction(move |_| c, c, c.abs())
    }

    /// Spot-checks `ξᵀA(x)ξ ≥ c0|ξ|²` at every quadrature point with random `ξ`.
    pub fn check_ellipticity(&self, mesh: &Mesh, directions: usize, seed: u64) -> Result<(), FemError> {
        let Some(a) = &self.diffusion else {
            return if self.c0 <= 1.0 { Ok(()) } else {
                Err(FemError::Ellipticity { at: mesh.vertices[0], value: 1.0, bound: self.c0 })
            };
        };
        let rule = triangle_degree2();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for tri in &mesh.triangles {
            let p = tri.map(|i| mesh.vertices[i]);
            for bary in &rule.points {
                let x = at(&p, bary);
                let m = a(x);
                for _ in 0..directions {
                    let xi = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
                    let value = xi[0] * (m[0][0] * xi[0] + m[0][1] * xi[1]) + xi[1] * (m[1][0] * xi[0] + m[1][1] * xi[1]);
                    let bound = self.c0 * (xi[0] * xi[0] + xi[1] * xi[1]);
                    if value < bound - 1e-12 * bound.max(1e-300) {
                        return Err(FemError::Ellipticity { at: x, value, bound });
                    }
                }
            }
        }
        Ok(())
    }
}

fn at(p: &[Point; 3], bary: &[f64; 3]) -> Point {
    [
        bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
        bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
    ]
}

/// Area and barycentric gradients of a counterclockwise triangle.
fn geometry(p: &[Point; 3]) -> (f64, [[f64; 2]; 3]) {
    let area2 = cross(sub(p[1], p[0]), sub(p[2], p[0]));
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [(p[j][1] - p[k][1]) / area2, (p[k][0] - p[j][0]) / area2];
    }
    (0.5 * area2, g)
}

type Local = [[f64; 3]; 3];

fn element_matrices(p: &[Point; 3], coeffs: &CoefficientField, rule: &TriangleRule) -> (Local, Local) {
    let (area, g) = geometry(p);
    let mut mass = [[area / 12.0; 3]; 3];
    for (i, row) in mass.iter_mut().enumerate() {
        row[i] = area / 6.0;
    }
    let mut k = [[0.0; 3]; 3];
    let a_mean = coeffs.diffusion.as_ref().map(|a| {
        let mut m = [[0.0; 2]; 2];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let v = a(at(p, bary));
            for r in 0..2 {
                for c in 0..2 {
                    m[r][c] += w * v[r][c];
                }
            }
        }
        m
    });
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = match a_mean {
                None => area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]),
                // Row i is the test function: A_{rc} ∂_c u ∂_r v.
                Some(m) => area * (0..2).flat_map(|r| (0..2).map(move |c| (r, c))).map(|(r, c)| m[r][c] * g[j][c] * g[i][r]).sum::<f64>(),
            };
        }
    }
    if let Some(b) = &coeffs.convection {
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let bv = b(at(p, bary));
            for i in 0..3 {
                for j in 0..3 {
                    k[i][j] += area * w * (bv[0] * g[j][0] + bv[1] * g[j][1]) * bary[i];
                }
            }
        }
    }
    if let Some(c) = &coeffs.reaction {
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let cv = c(at(p, bary));
            for i in 0..3 {
                for j in 0..3 {
                    k[i][j] += area * w * cv * bary[i] * bary[j];
                }
            }
        }
    }
    (k, mass)
}

/// Vertex-level operators: `stiffness` represents `h_A(·,·) − λ(·,·)`, `mass` the L2 product.
#[derive(Clone, Debug)]
pub struct Assembled {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub lambda: f64,
}

fn quality_gate(mesh: &Mesh) -> Result<(), FemError> {
    let q = mesh_quality(mesh);
    if q.acceptable() {
        Ok(())
    } else {
        Err(FemError::Quality { min_angle: q.min_angle_deg, bad: q.nonpositive_area })
    }
}

/// Element matrices are computed in parallel and summed in element order, so
/// the result does not depend on the thread count.
pub fn assemble(mesh: &Mesh, coeffs: &CoefficientField, lambda: f64) -> Result<Assembled, FemError> {
    quality_gate(mesh)?;
    let rule = triangle_degree2();
    let local: Vec<(Local, Local)> = mesh
        .triangles
        .par_iter()
        .map(|tri| element_matrices(&tri.map(|i| mesh.vertices[i]), coeffs, &rule))
        .collect();
    let n = mesh.vertices.len();
    let mut kt = Vec::with_capacity(9 * local.len());
    let mut mt = Vec::with_capacity(9 * local.len());
    for (tri, (k, m)) in mesh.triangles.iter().zip(&local) {
        for i in 0..3 {
            for j in 0..3 {
                kt.push((tri[i], tri[j], k[i][j] - lambda * m[i][j]));
                mt.push((tri[i], tri[j], m[i][j]));
            }
        }
    }
    Ok(Assembled { stiffness: CsrMatrix::from_triplets(n, n, &kt), mass: CsrMatrix::from_triplets(n, n, &mt), lambda })
}

/// `∫ f φ_i` with the degree-5 seven-point rule.
pub fn load_vector(mesh: &Mesh, f: &(dyn Fn(Point) -> f64 + Sync)) -> Vec<f64> {
    let rule = triangle_degree5();
    let local: Vec<[f64; 3]> = mesh
        .triangles
        .par_iter()
        .map(|tri| {
            let p = tri.map(|i| mesh.vertices[i]);
            let area = 0.5 * cross(sub(p[1], p[0]), sub(p[2], p[0]));
            let mut out = [0.0; 3];
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let fv = f(at(&p, bary));
                for i in 0..3 {
                    out[i] += area * w * fv * bary[i];
                }
            }
            out
        })
        .collect();
    let mut b = vec![0.0; mesh.vertices.len()];
    for (tri, l) in mesh.triangles.iter().zip(&local) {
        for i in 0..3 {
            b[tri[i]] += l[i];
        }
    }
    b
}

/// `∫ g φ_i ds` over non-Dirichlet, non-periodic boundary edges (two-point Gauss).
pub fn boundary_load(mesh: &Mesh, g: &dyn Fn(BoundaryTag, Point) -> f64) -> Vec<f64> {
    let (gx, gw) = gauss_legendre(2);
    let mut b = vec![0.0; mesh.vertices.len()];
    for e in &mesh.boundary_edges {
        if e.tag.is_dirichlet() || e.tag == BoundaryTag::Periodic {
            continue;
        }
        let (p, q) = (mesh.vertices[e.v[0]], mesh.vertices[e.v[1]]);
        let len = dist(p, q);
        for (x, w) in gx.iter().zip(&gw) {
            let t = 0.5 * (x + 1.0);
            let v = g(e.tag, [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            b[e.v[0]] += 0.5 * len * w * v * (1.0 - t);
            b[e.v[1]] += 0.5 * len * w * v * t;
        }
    }
    b
}

/// Lumped boundary mass (`L/2` per endpoint) over edges whose tag satisfies `select`.
pub fn lumped_boundary_mass(mesh: &Mesh, select: impl Fn(BoundaryTag) -> bool) -> Vec<f64> {
    let mut d = vec![0.0; mesh.vertices.len()];
    for e in mesh.boundary_edges.iter().filter(|e| select(e.tag)) {
        let half = 0.5 * mesh.edge_length(e);
        d[e.v[0]] += half;
        d[e.v[1]] += half;
    }
    d
}

/// Degrees of freedom: Dirichlet vertices are removed and periodic images share
/// the unknown of their representative.
#[derive(Clone, Debug, PartialEq)]
pub struct FeSpace {
    pub dof_of_vertex: Vec<Option<usize>>,
    pub n_dofs: usize,
}

impl FeSpace {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.vertices.len();
        let rep = mesh.periodic_representatives();
        let mut fixed = vec![false; n];
        for e in mesh.boundary_edges.iter().filter(|e| e.tag.is_dirichlet()) {
            fixed[rep[e.v[0]]] = true;
            fixed[rep[e.v[1]]] = true;
        }
        let mut dof_of_rep = vec![None; n];
        let mut n_dofs = 0;
        for v in 0..n {
            if rep[v] == v && !fixed[v] {
                dof_of_rep[v] = Some(n_dofs);
                n_dofs += 1;
            }
        }
        FeSpace { dof_of_vertex: (0..n).map(|v| dof_of_rep[rep[v]]).collect(), n_dofs }
    }

    /// Galerkin restriction `Pᵀ A P` of a vertex-level matrix.
    pub fn restrict_matrix(&self, a: &CsrMatrix) -> CsrMatrix {
        let mut t = Vec::with_capacity(a.nnz());
        for (i, j, v) in a.triplets() {
            if let (Some(di), Some(dj)) = (self.dof_of_vertex[i], self.dof_of_vertex[j]) {
                t.push((di, dj, v));
            }
        }
        CsrMatrix::from_triplets(self.n_dofs, self.n_dofs, &t)
    }

    /// `Pᵀ b`: sums vertex contributions into their unknowns.
    pub fn restrict_vector(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs];
        for (v, d) in self.dof_of_vertex.iter().enumerate() {
            if let Some(d) = d {
                out[*d] += b[v];
            }
        }
        out
    }

    /// `P x`: vertex values, zero on Dirichlet vertices.
    pub fn extend(&self, x: &[f64]) -> Vec<f64> {
        self.dof_of_vertex.iter().map(|d| d.map_or(0.0, |d| x[d])).collect()
    }

    /// Unknown values read off a vertex field (representatives win).
    pub fn gather(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs];
        for (v, d) in self.dof_of_vertex.iter().enumerate().rev() {
            if let Some(d) = d {
                out[*d] = values[v];
            }
        }
        out
    }
}

/// Boundary residual `∫ a(x,u) φ_i ds` (lumped) and its diagonal tangent.
#[derive(Clone, Debug, PartialEq)]
pub struct RobinResidual {
    pub residual: Vec<f64>,
    pub tangent: Vec<f64>,
}

impl RobinResidual {
    pub fn tangent_matrix(&self) -> CsrMatrix {
        CsrMatrix::diagonal_matrix(&self.tangent)
    }
}

pub fn assemble_robin_residual(mesh: &Mesh, robin: &RobinModel, u: &[f64]) -> Result<RobinResidual, FemError> {
    let n = mesh.vertices.len();
    let mut residual = vec![0.0; n];
    let mut tangent = vec![0.0; n];
    for e in &mesh.boundary_edges {
        let BoundaryTag::CavityRobin(k) = e.tag else { continue };
        let half = 0.5 * mesh.edge_length(e);
        for &v in &e.v {
            let x = mesh.vertices[v];
            let a = robin.eval(k, x, u[v]);
            let da = robin.derivative(k, x, u[v]);
            if !a.is_finite() {
                return Err(FemError::NonFinite { what: "Robin nonlinearity", at: x });
            }
            if !da.is_finite() {
                return Err(FemError::NonFinite { what: "Robin tangent", at: x });
            }
            residual[v] += half * a;
            tangent[v] += half * da;
        }
    }
    Ok(RobinResidual { residual, tangent })
}

#[derive(Clone)]
pub struct ProblemData {
    pub f: ScalarField,
    /// Inhomogeneous co-normal data on Neumann and Robin edges (zero when absent).
    pub g: Option<BoundaryField>,
    pub lambda: f64,
    pub lambda0: Option<f64>,
}

impl ProblemData {
    pub fn new(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        ProblemData { f: Arc::new(f), g: None, lambda: 0.0, lambda0: None }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c)
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub krylov_threshold: usize,
    /// Cholesky probe on the symmetric part of the first tangent.
    pub check_definiteness: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 50, krylov_threshold: KRYLOV_THRESHOLD, check_definiteness: true }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Solution {
    /// Nodal values on every mesh vertex.
    pub values: Vec<f64>,
    /// Euclidean norm of the discrete residual against all test functions.
    pub residual: f64,
    /// The scale the tolerance was applied to.
    pub reference: f64,
    pub iterations: usize,
    pub picard_steps: usize,
    pub n_dofs: usize,
}

pub fn solve(
    mesh: &Mesh,
    coeffs: &CoefficientField,
    robin: &RobinModel,
    data: &ProblemData,
    options: &SolverOptions,
) -> Result<Solution, FemError> {
    if let Some(l0) = data.lambda0 {
        if data.lambda > l0 {
            return Err(FemError::InvalidInput(format!("λ = {} exceeds λ0 = {l0}", data.lambda)));
        }
    }
    let assembled = assemble(mesh, coeffs, data.lambda)?;
    let mut load = load_vector(mesh, &*data.f);
    if let Some(g) = &data.g {
        for (b, gb) in load.iter_mut().zip(boundary_load(mesh, &**g)) {
            *b += gb;
        }
    }
    solve_assembled(mesh, &FeSpace::new(mesh), &assembled.stiffness, robin, &load, options)
}

/// The nonlinear solve on pre-assembled vertex-level operators.
pub fn solve_assembled(
    mesh: &Mesh,
    space: &FeSpace,
    stiffness: &CsrMatrix,
    robin: &RobinModel,
    load: &[f64],
    options: &SolverOptions,
) -> Result<Solution, FemError> {
    let lin = space.restrict_matrix(stiffness);
    let rhs = space.restrict_vector(load);
    let has_robin = mesh.boundary_edges.iter().any(|e| e.tag.is_robin());
    let evaluate = |x: &[f64]| -> Result<(Vec<f64>, Vec<f64>), FemError> {
        let mut r = lin.matvec(x);
        let mut d = vec![0.0; x.len()];
        if has_robin {
            let rr = assemble_robin_residual(mesh, robin, &space.extend(x))?;
            for (ri, bi) in r.iter_mut().zip(space.restrict_vector(&rr.residual)) {
                *ri += bi;
            }
            d = space.restrict_vector(&rr.tangent);
        }
        for (ri, fi) in r.iter_mut().zip(&rhs) {
            *ri -= fi;
        }
        Ok((r, d))
    };
    let n = space.n_dofs;
    let mut u = vec![0.0; n];
    let (mut r, mut d) = evaluate(&u)?;
    let mut res = norm2(&r);
    let reference = norm2(&rhs).max(res);
    let done = |res: f64| res <= options.tol * reference;
    let finish = |u: &[f64], res: f64, iterations: usize, picard_steps: usize| Solution {
        values: space.extend(u),
        residual: res,
        reference,
        iterations,
        picard_steps,
        n_dofs: n,
    };
    if reference == 0.0 || done(res) {
        return Ok(finish(&u, res, 0, 0));
    }
    let jacobian = |d: &[f64]| {
        let mut j = lin.clone();
        j.add_to_diagonal(d);
        j
    };
    let j0 = jacobian(&d);
    if options.check_definiteness && cholesky(&j0.symmetric_part()).is_err() {
        return Err(FemError::IndefiniteSystem);
    }
    let mut newton = LinearSolver::new(&j0, options.krylov_threshold)?;
    let mut factored_tangent = d.clone();
    let mut picard: Option<LinearSolver> = None;
    let mut picard_steps = 0;
    for it in 1..=options.max_iter {
        if d != factored_tangent {
            newton.refactor(&jacobian(&d))?;
            factored_tangent.clone_from(&d);
        }
        let minus_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = newton.solve(&minus_r)?;
        let mut accepted = None;
        let mut t = 1.0;
        while t >= 1.0 / 64.0 {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let (rt, dt) = evaluate(&trial)?;
            let nt = norm2(&rt);
            if nt <= (1.0 - 1e-4 * t) * res {
                accepted = Some((trial, rt, dt, nt));
                break;
            }
            t *= 0.5;
        }
        if accepted.is_none() {
            // Picard on the monotone splitting L + a0 B.
            if picard.is_none() {
                let b = space.restrict_vector(&lumped_boundary_mass(mesh, |t| t.is_robin()));
                let shift: Vec<f64> = b.iter().map(|v| robin.a0 * v).collect();
                picard = Some(LinearSolver::new(&jacobian(&shift), options.krylov_threshold)?);
            }
            let step = picard.as_ref().unwrap().solve(&minus_r)?;
            let mut t = 1.0;
            while t >= 1.0 / 1024.0 {
                let trial: Vec<f64> = u.iter().zip(&step).map(|(a, s)| a + t * s).collect();
                let (rt, dt) = evaluate(&trial)?;
                let nt = norm2(&rt);
                if nt < res {
                    accepted = Some((trial, rt, dt, nt));
                    break;
                }
                t *= 0.5;
            }
            picard_steps += 1;
        }
        let Some((nu, nr, nd, nres)) = accepted else {
            return Err(FemError::NonConvergence { iterations: it, residual: res });
        };
        u = nu;
        r = nr;
        d = nd;
        res = nres;
        if done(res) {
            return Ok(finish(&u, res, it, picard_steps));
        }
    }
    Err(FemError::NonConvergence { iterations: options.max_iter, residual: res })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub w12: f64,
}

/// Exact P1 norms over the triangles selected by `keep`.
pub fn norms_where(mesh: &Mesh, values: &[f64], keep: impl Fn(usize) -> bool) -> Norms {
    let (mut l2, mut h1) = (0.0, 0.0);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !keep(t) {
            continue;
        }
        let p = tri.map(|i| mesh.vertices[i]);
        let u = tri.map(|i| values[i]);
        let (area, g) = geometry(&p);
        let s: f64 = u.iter().sum();
        let sq: f64 = u.iter().map(|v| v * v).sum();
        l2 += area / 12.0 * (sq + s * s);
        let grad = [
            u[0] * g[0][0] + u[1] * g[1][0] + u[2] * g[2][0],
            u[0] * g[0][1] + u[1] * g[1][1] + u[2] * g[2][1],
        ];
        h1 += area * (grad[0] * grad[0] + grad[1] * grad[1]);
    }
    Norms { l2: l2.sqrt(), h1_semi: h1.sqrt(), w12: (l2 + h1).sqrt() }
}

pub fn norms(mesh: &Mesh, values: &[f64]) -> Norms {
    norms_where(mesh, values, |_| true)
}

/// `‖u_h − w‖_{L2}` with the seven-point rule on every triangle.
pub fn l2_error(mesh: &Mesh, values: &[f64], exact: &(dyn Fn(Point) -> f64 + Sync)) -> f64 {
    let rule = triangle_degree5();
    let parts: Vec<f64> = mesh
        .triangles
        .par_iter()
        .map(|tri| {
            let p = tri.map(|i| mesh.vertices[i]);
            let area = 0.5 * cross(sub(p[1], p[0]), sub(p[2], p[0]));
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(b, w)| {
                    let uh = b[0] * values[tri[0]] + b[1] * values[tri[1]] + b[2] * values[tri[2]];
                    let e = uh - exact(at(&p, b));
                    area * w * e * e
                })
                .sum()
        })
        .collect();
    parts.iter().sum::<f64>().sqrt()
}

/// `∫ u² ds` over the edges tagged `tag`, with two-point Gauss per edge.
pub fn boundary_trace_norm(mesh: &Mesh, values: &[f64], tag: BoundaryTag) -> Result<f64, FemError> {
    let (gx, gw) = gauss_legendre(2);
    let mut total = 0.0;
    let mut found = false;
    for e in mesh.edges_with_tag(tag) {
        found = true;
        let len = mesh.edge_length(e);
        let (a, b) = (values[e.v[0]], values[e.v[1]]);
        for (x, w) in gx.iter().zip(&gw) {
            let t = 0.5 * (x + 1.0);
            let u = a + t * (b - a);
            total += 0.5 * len * w * u * u;
        }
    }
    if found {
        Ok(total)
    } else {
        Err(FemError::UnknownTag(tag))
    }
}

/// Area-weighted mean over the triangles whose centroid lies in `region`, and
/// the fluctuation `u − mean` at every vertex.
pub fn mean_free_decompose(mesh: &Mesh, values: &[f64], region: impl Fn(Point) -> bool) -> Result<(f64, Vec<f64>), FemError> {
    let (mut integral, mut area) = (0.0, 0.0);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|i| mesh.vertices[i]);
        if !region([(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]) {
            continue;
        }
        let a = mesh.triangle_area(t);
        integral += a * (values[tri[0]] + values[tri[1]] + values[tri[2]]) / 3.0;
        area += a;
    }
    if area == 0.0 {
        return Err(FemError::EmptyRegion);
    }
    let mean = integral / area;
    Ok((mean, values.iter().map(|v| v - mean).collect()))
}

/// Sharp constant of the lumped edge quadrature against the element mass:
/// `(L/2)(u_a² + u_b²) ≤ 6 L/|T| ‖u‖²_T` for P1 functions.
const LUMPED_TRACE_CONSTANT: f64 = 6.0;

#[derive(Clone, Debug, Serialize)]
pub struct CoercivityReport {
    /// Certified shift: the symmetric part of the discrete form minus `λ0 M` is nonnegative.
    pub lambda0: f64,
    pub convection_term: f64,
    pub reaction_term: f64,
    pub robin_term: f64,
    /// Smallest eigenvalue of the shifted symmetric pencil (should be ≥ 0).
    pub probe_min_eigenvalue: f64,
}

/// `λ0 = inf c − sup|b|²/c0 − c1 ε η^{−1} · max_T 6 L_T/|T|`, where `L_T` is the
/// Robin edge length of triangle `T`. The gradient coefficient left over is
/// `3c0/4`; the bound is then confirmed by inverse iteration.
pub fn coercivity_bound(
    mesh: &Mesh,
    coeffs: &CoefficientField,
    robin: &RobinModel,
    eps: f64,
    eta: f64,
) -> Result<CoercivityReport, FemError> {
    let convection_term = if coeffs.convection.is_some() { coeffs.convection_sup.powi(2) / coeffs.c0 } else { 0.0 };
    let reaction_term = if coeffs.reaction.is_some() { coeffs.reaction_inf } else { 0.0 };
    let mut robin_len = vec![0.0; mesh.triangles.len()];
    if robin.c1 > 0.0 {
        let mut owner = std::collections::HashMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for i in 0..3 {
                owner.insert((tri[i], tri[(i + 1) % 3]), t);
            }
        }
        for e in mesh.boundary_edges.iter().filter(|e| e.tag.is_robin()) {
            if let Some(&t) = owner.get(&(e.v[0], e.v[1])) {
                robin_len[t] += mesh.edge_length(e);
            }
        }
    }
    let trace = (0..mesh.triangles.len())
        .map(|t| LUMPED_TRACE_CONSTANT * robin_len[t] / mesh.triangle_area(t))
        .fold(0.0, f64::max);
    let robin_term = robin.c1 * eps / eta * trace;
    let lambda0 = reaction_term - convection_term - robin_term;

    let space = FeSpace::new(mesh);
    let asm = assemble(mesh, coeffs, lambda0)?;
    let zero = vec![0.0; mesh.vertices.len()];
    let rr = assemble_robin_residual(mesh, robin, &zero)?;
    let mut s = space.restrict_matrix(&asm.stiffness.add_scaled(1.0, &rr.tangent_matrix())).symmetric_part();
    s.data.iter_mut().for_each(|v| {
        if v.abs() < 1e-300 {
            *v = 0.0
        }
    });
    let m = space.restrict_matrix(&asm.mass);
    let min_eig = smallest_generalized_eigenvalue(&s, &m, 1e-10)?;
    let scale = s.diagonal().iter().zip(m.diagonal()).map(|(a, b)| a.abs() / b).fold(0.0, f64::max);
    if min_eig < -1e-8 * scale.max(1.0) {
        return Err(FemError::ProbeContradiction { lambda0, min_eig });
    }
    Ok(CoercivityReport { lambda0, convection_term, reaction_term, robin_term, probe_min_eigenvalue: min_eig })
}

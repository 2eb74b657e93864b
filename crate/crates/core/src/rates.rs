//! ε-sweeps of the full solver, log–log slope fits and the sharpness constructions.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{self, Bump, BumpProfile, CellError, CellParams};
use crate::fem::{self, l2_error, norms, CoefficientField, FemError, ProblemData, RobinModel, SolverOptions};
use crate::geometry::{
    audit, build_layout, kappa, smallness_indicators, BcRule, Generator, GeometryCheckReport, GeometryError,
    InnerBall, LayoutConfig, OuterDomain, PerforationLayout, Radii, ReferenceShape,
};
use crate::mesh::{default_boundary_divisions, refine_uniform, triangulate, Mesh, MeshError};
use crate::Point;

#[derive(Debug, Error)]
pub enum RatesError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{field}: {message}")]
    InvalidField { field: &'static str, message: String },
    #[error("theorem/parameter mismatch: {0}")]
    TheoremMismatch(String),
    #[error("need at least 2 points to fit a slope, got {0}")]
    InsufficientPoints(usize),
    #[error("slope fit needs positive coordinates, got ({0}, {1})")]
    NonPositive(f64, f64),
    #[error("geometry at ε = {eps}: {reason}")]
    Geometry { eps: f64, reason: String },
    #[error("mesh at ε = {eps}: {source}")]
    Mesh { eps: f64, source: MeshError },
    #[error("solver at ε = {eps}: {source}")]
    Solver { eps: f64, source: FemError },
    #[error("ε = {eps} needs about {estimate} triangles, over the budget of {budget}")]
    MeshBudget { eps: f64, estimate: usize, budget: usize },
    #[error("support of f does not fit the construction: {0}")]
    SupportMismatch(String),
    #[error(transparent)]
    Cell(#[from] CellError),
}

impl RatesError {
    /// Solver breakdowns, as opposed to configuration problems.
    pub fn is_nonconvergence(&self) -> bool {
        matches!(self, RatesError::Solver { .. } | RatesError::Cell(CellError::Fem(_)))
    }
}

fn geometry_error(eps: f64, e: GeometryError) -> RatesError {
    RatesError::Geometry { eps, reason: e.to_string() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    T1,
    T2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    W12,
}

/// Right-hand-side factor of the theorem estimate, without the unknown constant.
pub fn predicted_bound(eps: f64, eta: f64, mu: Option<f64>, n: usize, theorem: Theorem, norm: NormKind) -> Result<f64, RatesError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(RatesError::InvalidParameter(format!("ε = {eps}")));
    }
    let k = kappa(eta, n).map_err(|e| geometry_error(eps, e))?;
    let nf = n as f64;
    match theorem {
        Theorem::T1 => {
            let mu = mu.ok_or_else(|| RatesError::TheoremMismatch("T1 requires µ".into()))?;
            if !(mu.is_finite() && mu > 0.0) {
                return Err(RatesError::InvalidParameter(format!("µ = {mu}")));
            }
            Ok(match norm {
                NormKind::W12 => eps.sqrt() * eta.powf(-nf / 2.0 + 0.5) / mu.sqrt() + eps * eta.powf(-nf / 2.0 + 1.0) * k,
                NormKind::L2 => eps * eta.powf(1.0 - nf) / mu + eps * eps * eta.powf(2.0 - nf) * k,
            })
        }
        Theorem::T2 => Ok(match norm {
            NormKind::W12 => eps * eta.powf(-nf / 2.0 + 1.0) * k.sqrt(),
            NormKind::L2 => eps * eps * eta.powf(2.0 - nf) * k,
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS of the log deviations from the fitted line.
    pub residual: f64,
}

/// Least squares on `(ln x, ln y)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit, RatesError> {
    if points.len() < 2 {
        return Err(RatesError::InsufficientPoints(points.len()));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(RatesError::NonPositive(x, y));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(RatesError::InvalidParameter("all abscissae coincide".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(SlopeFit { slope, intercept, residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaRule {
    Fixed { value: f64 },
    /// `η = ε^γ`.
    Power { gamma: f64 },
}

impl EtaRule {
    pub fn at(&self, eps: f64) -> f64 {
        match *self {
            EtaRule::Fixed { value } => value,
            EtaRule::Power { gamma } => eps.powf(gamma),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum MuRule {
    Fixed { value: f64 },
    /// `µ = ε^{−β}`.
    Power { beta: f64 },
}

impl MuRule {
    pub fn at(&self, eps: f64) -> f64 {
        match *self {
            MuRule::Fixed { value } => value,
            MuRule::Power { beta } => eps.powf(-beta),
        }
    }
}

/// Constant coefficients `A = a I`, `b`, `c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientSpec {
    pub diffusion: f64,
    pub convection: [f64; 2],
    pub reaction: f64,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec { diffusion: 1.0, convection: [0.0, 0.0], reaction: 0.0 }
    }
}

impl CoefficientSpec {
    pub fn field(&self) -> CoefficientField {
        let mut c = CoefficientField::laplacian();
        if self.diffusion != 1.0 {
            let a = self.diffusion;
            c = c.with_diffusion(move |_| [[a, 0.0], [0.0, a]], a, a);
        }
        if self.convection != [0.0, 0.0] {
            let b = self.convection;
            c = c.with_convection(move |_| b, b[0].hypot(b[1]));
        }
        if self.reaction != 0.0 {
            c = c.with_constant_reaction(self.reaction);
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RobinFamily {
    #[default]
    Linear,
    Tanh { beta: f64 },
}

impl RobinFamily {
    pub fn model(&self, mu: f64) -> RobinModel {
        match *self {
            RobinFamily::Linear => RobinModel::linear(mu),
            RobinFamily::Tanh { beta } => RobinModel::tanh(mu, beta),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Constant { value: f64 },
    Bump { center: Point, radius: f64, amplitude: f64, profile: BumpProfile },
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Constant { value: 1.0 }
    }
}

impl SourceSpec {
    pub fn eval(&self, x: Point) -> f64 {
        match *self {
            SourceSpec::Constant { value } => value,
            SourceSpec::Bump { center, radius, amplitude, profile } => Bump { center, radius, amplitude, profile }.value(x),
        }
    }
}

/// The ε-independent part of a layout configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutTemplate {
    pub generator: Generator,
    #[serde(default)]
    pub shape: ReferenceShape,
    #[serde(default)]
    pub inner_ball: Option<InnerBall>,
    pub bc: BcRule,
    #[serde(default)]
    pub radii: Radii,
    #[serde(default)]
    pub outer: OuterDomain,
}

impl LayoutTemplate {
    pub fn config(&self, epsilon: f64, eta: f64) -> LayoutConfig {
        LayoutConfig {
            epsilon,
            eta,
            generator: self.generator.clone(),
            shape: self.shape.clone(),
            inner_ball: self.inner_ball,
            bc: self.bc.clone(),
            radii: self.radii,
            outer: self.outer,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshBudget {
    /// Target element size as a multiple of ε.
    pub h_factor: f64,
    pub max_triangles: usize,
    /// Cavity boundary divisions; by default chosen from the element size.
    pub boundary_divisions: Option<usize>,
    /// Re-solve the largest ε on a uniformly refined mesh.
    pub refinement_probe: bool,
}

impl Default for MeshBudget {
    fn default() -> Self {
        MeshBudget { h_factor: 0.25, max_triangles: 300_000, boundary_divisions: None, refinement_probe: true }
    }
}

/// Allowed `|fitted − predicted|` slope deviation per norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub l2: f64,
    pub w12: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { l2: 0.4, w12: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub theorem: Theorem,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub eta: EtaRule,
    #[serde(default)]
    pub mu: Option<MuRule>,
    pub layout: LayoutTemplate,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub robin: RobinFamily,
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub mesh: MeshBudget,
    #[serde(default)]
    pub tolerance: Tolerances,
}

impl Scenario {
    /// Structural checks that need no geometry.
    pub fn validate(&self) -> Result<(), RatesError> {
        if self.epsilons.is_empty() {
            return Err(RatesError::InvalidField { field: "epsilons", message: "empty list".into() });
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(RatesError::InvalidField { field: "epsilons", message: format!("{e} is not a positive number") });
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(RatesError::InvalidField { field: "epsilons", message: "list must be strictly decreasing".into() });
        }
        for &eps in &self.epsilons {
            let eta = self.eta.at(eps);
            if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
                return Err(RatesError::InvalidField { field: "eta", message: format!("rule gives η = {eta} at ε = {eps}, outside (0, 1]") });
            }
            if let Some(mu) = self.mu.map(|m| m.at(eps)) {
                if !(mu.is_finite() && mu >= 1.0) {
                    return Err(RatesError::InvalidField { field: "mu", message: format!("rule gives µ = {mu} at ε = {eps}, below 1") });
                }
            }
        }
        if self.theorem == Theorem::T1 && self.mu.is_none() {
            return Err(RatesError::InvalidField { field: "mu", message: "T1 requires a mu rule".into() });
        }
        if !(self.mesh.h_factor.is_finite() && self.mesh.h_factor > 0.0) {
            return Err(RatesError::InvalidField { field: "mesh.h_factor", message: format!("{} must be positive", self.mesh.h_factor) });
        }
        if !(self.tolerance.l2 >= 0.0 && self.tolerance.w12 >= 0.0) {
            return Err(RatesError::InvalidField { field: "tolerance", message: "must be nonnegative".into() });
        }
        Ok(())
    }

    pub fn eta_at(&self, eps: f64) -> f64 {
        self.eta.at(eps)
    }

    /// µ at ε; scenarios without a µ rule use µ = 1 in the smallness indicators.
    pub fn mu_at(&self, eps: f64) -> Option<f64> {
        self.mu.map(|m| m.at(eps))
    }

    pub fn robin_model(&self, eps: f64) -> RobinModel {
        self.robin.model(self.mu_at(eps).unwrap_or(1.0))
    }

    pub fn layout(&self, eps: f64) -> Result<PerforationLayout, RatesError> {
        build_layout(&self.layout.config(eps, self.eta_at(eps))).map_err(|e| geometry_error(eps, e))
    }

    /// Geometry audit plus the theorem's index-set hypotheses.
    pub fn check_geometry(&self, eps: f64) -> Result<(PerforationLayout, GeometryCheckReport), RatesError> {
        let layout = self.layout(eps)?;
        let definite = !layout.index_sets.robin_definite.is_empty();
        match self.theorem {
            Theorem::T1 if !definite => {
                return Err(RatesError::TheoremMismatch("T1 needs at least one sign-definite Robin cavity".into()))
            }
            Theorem::T2 if definite => {
                return Err(RatesError::TheoremMismatch("T2 needs no sign-definite Robin cavities".into()))
            }
            _ => {}
        }
        let robin = self.robin_model(eps);
        let report = audit(&layout, Some(&robin), None).map_err(|e| geometry_error(eps, e))?;
        Ok((layout, report))
    }

    pub fn element_size(&self, eps: f64) -> f64 {
        self.mesh.h_factor * eps
    }

    pub fn build_mesh(&self, eps: f64, layout: &PerforationLayout) -> Result<Mesh, RatesError> {
        let h = self.element_size(eps);
        let (lo, hi) = layout.outer_domain.bounding_box();
        // Equilateral elements of side h, with a margin for refinement near cavities.
        let estimate = (1.5 * (hi[0] - lo[0]) * (hi[1] - lo[1]) / (3f64.sqrt() / 4.0 * h * h)) as usize;
        if estimate > self.mesh.max_triangles {
            return Err(RatesError::MeshBudget { eps, estimate, budget: self.mesh.max_triangles });
        }
        let divisions = self.mesh.boundary_divisions.unwrap_or_else(|| default_boundary_divisions(layout, h));
        triangulate(layout, h, divisions).map_err(|source| RatesError::Mesh { eps, source })
    }

    fn problem_data(&self) -> ProblemData {
        let source = self.source;
        let mut d = ProblemData::new(move |x| source.eval(x));
        d.lambda = self.lambda;
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub eps: f64,
    pub eta: f64,
    pub mu: Option<f64>,
    pub kappa: f64,
    pub theta1: Option<f64>,
    pub theta2: f64,
    pub l2_norm: f64,
    pub w12_norm: f64,
    pub f_norm: f64,
    pub triangles: usize,
    pub newton_iters: usize,
    pub wall_ms: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Pass,
    Fail,
    /// θ2 too large at the largest ε for the fit to bear a verdict.
    Informational,
    InsufficientPoints,
    /// f ≡ 0: all norms vanish.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub theorem: Theorem,
    pub norm: NormKind,
    /// Slope of `ln(‖u‖/‖f‖)` against `ln ε`.
    pub fitted_slope: Option<f64>,
    pub residual: Option<f64>,
    /// Slope of `ln(predicted bound)` against `ln ε`.
    pub predicted_exponent: Option<f64>,
    /// Slope of `ln(‖u‖/‖f‖)` against `ln(predicted bound)`; 1 when the norm tracks the bound.
    pub slope_vs_bound: Option<f64>,
    pub tolerance: f64,
    pub status: VerdictStatus,
    pub pass: bool,
}

impl Verdict {
    /// Whether the verdict counts towards the exit status.
    pub fn bearing(&self) -> bool {
        matches!(self.status, VerdictStatus::Pass | VerdictStatus::Fail)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementProbe {
    pub eps: f64,
    /// Relative change of `‖u‖_{L2}` and `‖u‖_{W¹₂}` under one uniform refinement.
    pub l2_change: f64,
    pub w12_change: f64,
    /// Relative change of `‖u‖_{L2}/‖f‖` between the first two ε (the rate signal).
    pub signal: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateSweepResult {
    pub records: Vec<SweepRecord>,
    pub verdicts: Vec<Verdict>,
    pub probe: Option<RefinementProbe>,
}

/// Pure function of the records: re-running it on saved records reproduces the verdicts.
pub fn verdicts_from_records(theorem: Theorem, tolerance: &Tolerances, records: &[SweepRecord]) -> Result<Vec<Verdict>, RatesError> {
    let degenerate = records.iter().all(|r| r.f_norm == 0.0);
    let informational = records.first().is_some_and(|r| r.theta2 > 0.25);
    let mut out = Vec::new();
    for norm in [NormKind::L2, NormKind::W12] {
        let tol = match norm {
            NormKind::L2 => tolerance.l2,
            NormKind::W12 => tolerance.w12,
        };
        let mut v = Verdict {
            theorem,
            norm,
            fitted_slope: None,
            residual: None,
            predicted_exponent: None,
            slope_vs_bound: None,
            tolerance: tol,
            status: VerdictStatus::InsufficientPoints,
            pass: false,
        };
        if degenerate {
            v.status = VerdictStatus::Degenerate;
            v.pass = true;
            out.push(v);
            continue;
        }
        if records.len() < 2 {
            out.push(v);
            continue;
        }
        let mut measured = Vec::new();
        let mut predicted = Vec::new();
        let mut tracked = Vec::new();
        for r in records {
            let value = match norm {
                NormKind::L2 => r.l2_norm,
                NormKind::W12 => r.w12_norm,
            } / r.f_norm;
            let bound = predicted_bound(r.eps, r.eta, r.mu, 2, theorem, norm)?;
            measured.push((r.eps, value));
            predicted.push((r.eps, bound));
            tracked.push((bound, value));
        }
        let fit = fit_slope(&measured)?;
        let exponent = fit_slope(&predicted)?.slope;
        v.fitted_slope = Some(fit.slope);
        v.residual = Some(fit.residual);
        v.predicted_exponent = Some(exponent);
        v.slope_vs_bound = fit_slope(&tracked).ok().map(|f| f.slope);
        v.pass = (fit.slope - exponent).abs() <= tol;
        v.status = if informational {
            VerdictStatus::Informational
        } else if v.pass {
            VerdictStatus::Pass
        } else {
            VerdictStatus::Fail
        };
        out.push(v);
    }
    Ok(out)
}

struct Solved {
    record: SweepRecord,
    mesh: Mesh,
}

fn solve_at(scenario: &Scenario, eps: f64, mesh: Mesh) -> Result<Solved, RatesError> {
    let start = Instant::now();
    let eta = scenario.eta_at(eps);
    let mu = scenario.mu_at(eps);
    let (theta1, theta2) = smallness_indicators(eps, eta, mu.unwrap_or(1.0), 2).map_err(|e| geometry_error(eps, e))?;
    let data = scenario.problem_data();
    let sol = fem::solve(&mesh, &scenario.coefficients.field(), &scenario.robin_model(eps), &data, &SolverOptions::default())
        .map_err(|source| RatesError::Solver { eps, source })?;
    let n = norms(&mesh, &sol.values);
    let zero = vec![0.0; mesh.vertices.len()];
    let source = scenario.source;
    let f_norm = l2_error(&mesh, &zero, &move |x| source.eval(x));
    let record = SweepRecord {
        eps,
        eta,
        mu,
        kappa: kappa(eta, 2).map_err(|e| geometry_error(eps, e))?,
        theta1: mu.map(|_| theta1),
        theta2,
        l2_norm: n.l2,
        w12_norm: n.w12,
        f_norm,
        triangles: mesh.triangles.len(),
        newton_iters: sol.iterations,
        wall_ms: start.elapsed().as_millis() as u64,
    };
    Ok(Solved { record, mesh })
}

/// Runs every ε of the scenario concurrently and assembles the table in ε order.
pub fn run_sweep(scenario: &Scenario) -> Result<RateSweepResult, RatesError> {
    scenario.validate()?;
    let layouts: Vec<PerforationLayout> = scenario
        .epsilons
        .iter()
        .map(|&eps| {
            let (layout, report) = scenario.check_geometry(eps)?;
            if !report.pass() {
                return Err(RatesError::Geometry { eps, reason: failed_checks(&report) });
            }
            Ok(layout)
        })
        .collect::<Result<_, _>>()?;
    let smallness: Vec<f64> = scenario
        .epsilons
        .iter()
        .map(|&eps| {
            let (t1, t2) = smallness_indicators(eps, scenario.eta_at(eps), scenario.mu_at(eps).unwrap_or(1.0), 2)
                .map_err(|e| geometry_error(eps, e))?;
            Ok(if scenario.theorem == Theorem::T1 { t1 + t2 } else { t2 })
        })
        .collect::<Result<_, RatesError>>()?;
    if smallness.windows(2).any(|w| w[1] >= w[0]) {
        return Err(RatesError::InvalidParameter(format!("smallness indicators must decrease along the list, got {smallness:?}")));
    }
    let solved: Vec<Solved> = scenario
        .epsilons
        .par_iter()
        .zip(&layouts)
        .map(|(&eps, layout)| {
            let mesh = scenario.build_mesh(eps, layout)?;
            solve_at(scenario, eps, mesh)
        })
        .collect::<Result<_, _>>()?;
    let probe = if scenario.mesh.refinement_probe {
        let first = &solved[0];
        let fine = solve_at(scenario, first.record.eps, refine_uniform(&first.mesh))?;
        let rel = |a: f64, b: f64| if b == 0.0 { 0.0 } else { (a - b).abs() / b };
        let signal = solved.get(1).map(|s| {
            let (a, b) = (first.record.l2_norm / first.record.f_norm, s.record.l2_norm / s.record.f_norm);
            rel(b, a)
        });
        Some(RefinementProbe {
            eps: first.record.eps,
            l2_change: rel(first.record.l2_norm, fine.record.l2_norm),
            w12_change: rel(first.record.w12_norm, fine.record.w12_norm),
            signal,
        })
    } else {
        None
    };
    let records: Vec<SweepRecord> = solved.into_iter().map(|s| s.record).collect();
    let verdicts = verdicts_from_records(scenario.theorem, &scenario.tolerance, &records)?;
    Ok(RateSweepResult { records, verdicts, probe })
}

fn failed_checks(report: &GeometryCheckReport) -> String {
    let mut failed = Vec::new();
    if report.a1_inclusions.iter().any(|c| !c.pass) {
        failed.push("inclusion");
    }
    if !report.a1_separation.pass {
        failed.push("separation");
    }
    if !report.a1_boundary_clearance.pass {
        failed.push("boundary clearance");
    }
    if report.a3_covering.as_ref().is_some_and(|c| !c.pass) {
        failed.push("covering");
    }
    if report.alpha_bounds.as_ref().is_some_and(|v| v.iter().any(|a| !a.pass)) {
        failed.push("weight bounds");
    }
    format!("failed checks: {}", failed.join(", "))
}

/// Column order of the sweep CSV.
pub const CSV_COLUMNS: [&str; 12] =
    ["eps", "eta", "mu", "kappa", "theta1", "theta2", "l2_norm", "w12_norm", "f_norm", "triangles", "newton_iters", "wall_ms"];

/// Writes the sweep table; wall times are zeroed unless `timings` is set so that
/// identical runs give identical bytes.
pub fn write_csv<W: Write>(records: &[SweepRecord], timings: bool, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            r.eps.to_string(),
            r.eta.to_string(),
            opt(r.mu),
            r.kappa.to_string(),
            opt(r.theta1),
            r.theta2.to_string(),
            r.l2_norm.to_string(),
            r.w12_norm.to_string(),
            r.f_norm.to_string(),
            r.triangles.to_string(),
            r.newton_iters.to_string(),
            if timings { r.wall_ms.to_string() } else { "0".into() },
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Layout of the sharpness constructions: a box `(−w, w)²` split at its
/// horizontal midline, Dirichlet cavities above and Robin cavities below.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpnessSetup {
    pub eta: f64,
    pub half_width: f64,
    pub cell: CellParams,
}

impl Default for SharpnessSetup {
    fn default() -> Self {
        SharpnessSetup { eta: 0.5, half_width: 3.0, cell: CellParams::default() }
    }
}

/// The smooth bump used by the sharpness runs, centred in the Dirichlet
/// (`upper = true`) or Robin half of the default box.
pub fn sharpness_bump(upper: bool) -> Bump {
    Bump { center: [0.0, if upper { 1.5 } else { -1.5 }], radius: 1.25, amplitude: 1.0, profile: BumpProfile::Smooth }
}

#[derive(Clone, Debug, Serialize)]
pub struct SharpnessRow {
    pub eps: f64,
    pub mu: Option<f64>,
    pub u_l2: f64,
    pub u_w12: f64,
    /// `‖f − h‖_{L2(Ω^ε)}`.
    pub rhs_l2: f64,
    pub l2_ratio: f64,
    pub w12_ratio: f64,
    /// `l2_ratio` normalized by its claimed leading term.
    pub l2_scaled: f64,
    pub w12_scaled: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DirichletSharpness {
    pub eta: f64,
    pub rows: Vec<SharpnessRow>,
    /// Claimed limits of `l2_ratio/ε²` and `w12_ratio/ε`: `‖v0‖` and `‖∇v0‖` on the cell.
    pub v0_l2: f64,
    pub v0_grad: f64,
    /// The same limits divided by `|□ \ B_η|^{1/2}`, as the averaging of `‖f − h‖²` gives.
    pub corrected_l2: f64,
    pub corrected_grad: f64,
    pub cell_area: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RobinSharpness {
    pub eta: f64,
    pub rows: Vec<SharpnessRow>,
    /// Discrete flux constant used in the normalization, and its exact value.
    pub c4: f64,
    pub c4_exact: f64,
    /// `‖∇u_R‖² / (εµ⁻¹‖f‖²_{L2(ℝ²)})` per ε against the claimed `(4ⁿ/|∂B_1|)(1 − 1/n)`.
    pub gradient_coefficients: Vec<f64>,
    pub gradient_claim: f64,
}

fn check_support(f: &Bump, half_width: f64, upper: bool) -> Result<(), RatesError> {
    if f.amplitude == 0.0 {
        return Err(RatesError::InvalidParameter("f ≡ 0 leaves the ratios undefined".into()));
    }
    let [cx, cy] = f.center;
    let inside = cx.abs() + f.radius < half_width && cy.abs() + f.radius < half_width;
    let half = if upper { cy - f.radius > 0.0 } else { cy + f.radius < 0.0 };
    if !(f.radius > 0.0 && inside && half) {
        return Err(RatesError::SupportMismatch(format!(
            "B({:?}, {}) must lie strictly inside the {} half of (−{half_width}, {half_width})²",
            f.center,
            f.radius,
            if upper { "upper" } else { "lower" }
        )));
    }
    Ok(())
}

/// `[‖u‖², ‖∇u‖², ‖f − h‖²]` for `u = ε² v(x/ε) f` over the cells meeting supp f.
fn composed_norms(v: &cell::CellField, f: &Bump, eps: f64) -> [f64; 3] {
    cell::tile_integrate(v, eps, f.center, f.radius, |x, value, g| {
        let fv = f.value(x);
        let gf = f.gradient(x);
        let lf = f.laplacian(x);
        let u = eps * eps * value * fv;
        let du = [eps * eps * value * gf[0] + eps * g[0] * fv, eps * eps * value * gf[1] + eps * g[1] * fv];
        let h = 2.0 * eps * (g[0] * gf[0] + g[1] * gf[1]) + eps * eps * value * lf;
        [u * u, du[0] * du[0] + du[1] * du[1], (fv - h).powi(2)]
    })
}

fn row(eps: f64, mu: Option<f64>, sums: [f64; 3], l2_scale: f64, w12_scale: f64) -> SharpnessRow {
    let [uu, gg, rr] = sums;
    let (u_l2, u_w12, rhs_l2) = (uu.sqrt(), (uu + gg).sqrt(), rr.sqrt());
    SharpnessRow {
        eps,
        mu,
        u_l2,
        u_w12,
        rhs_l2,
        l2_ratio: u_l2 / rhs_l2,
        w12_ratio: u_w12 / rhs_l2,
        l2_scaled: u_l2 / rhs_l2 / l2_scale,
        w12_scaled: u_w12 / rhs_l2 / w12_scale,
    }
}

/// `u_D = ε² v0(x/ε) f` against `f − h_D` with `h_D = 2ε∇_ξv0·∇f + ε² v0 Δf`.
pub fn sharpness_dirichlet(eps_list: &[f64], f: &Bump, setup: &SharpnessSetup) -> Result<DirichletSharpness, RatesError> {
    check_support(f, setup.half_width, true)?;
    if eps_list.is_empty() || eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(RatesError::InvalidParameter(format!("ε list {eps_list:?}")));
    }
    let v0 = cell::solve_v0(setup.eta, &setup.cell)?;
    let rows = eps_list
        .par_iter()
        .map(|&eps| row(eps, None, composed_norms(&v0, f, eps), eps * eps, eps))
        .collect();
    let cell_area = v0.mesh.area();
    Ok(DirichletSharpness {
        eta: setup.eta,
        rows,
        v0_l2: v0.norms.l2,
        v0_grad: v0.norms.h1_semi,
        corrected_l2: v0.norms.l2 / cell_area.sqrt(),
        corrected_grad: v0.norms.h1_semi / cell_area.sqrt(),
        cell_area,
    })
}

/// `u_R = ε² v_µ(x/ε) f` with `a = µu`, normalized by `c4 ε/µ`.
pub fn sharpness_robin(eps_list: &[f64], mu: &MuRule, f: &Bump, setup: &SharpnessSetup) -> Result<RobinSharpness, RatesError> {
    check_support(f, setup.half_width, false)?;
    if eps_list.is_empty() || eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(RatesError::InvalidParameter(format!("ε list {eps_list:?}")));
    }
    let epsmu: Vec<f64> = eps_list.iter().map(|&e| e * mu.at(e)).collect();
    if let Some(p) = epsmu.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(RatesError::InvalidParameter(format!("εµ = {p} must lie in (0, 1)")));
    }
    if epsmu.windows(2).any(|w| w[1] >= w[0]) {
        return Err(RatesError::InvalidParameter(format!("εµ must decrease along the list, got {epsmu:?}")));
    }
    let v1 = cell::solve_v1(setup.eta, &setup.cell)?;
    let f_sq = f.l2_squared();
    let results: Vec<(SharpnessRow, f64)> = eps_list
        .par_iter()
        .zip(&epsmu)
        .map(|(&eps, &em)| {
            let vmu = cell::solve_vmu(setup.eta, em, &setup.cell)?;
            let sums = composed_norms(&vmu, f, eps);
            let m = em / eps;
            let lead = v1.c4 * eps / m;
            Ok((row(eps, Some(m), sums, lead, lead), sums[1] / (eps / m * f_sq)))
        })
        .collect::<Result<_, RatesError>>()?;
    let (rows, gradient_coefficients) = results.into_iter().unzip();
    Ok(RobinSharpness {
        eta: setup.eta,
        rows,
        c4: v1.c4,
        c4_exact: v1.c4_exact,
        gradient_coefficients,
        gradient_claim: 16.0 / (2.0 * std::f64::consts::PI) * 0.5,
    })
}

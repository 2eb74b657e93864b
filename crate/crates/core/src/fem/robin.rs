//! Nonlinear Robin boundary models and their sampled invariant checks.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::Point;

/// `a(k, x, u)` on the boundary of cavity `k`.
pub type RobinFn = Arc<dyn Fn(usize, Point, f64) -> f64 + Send + Sync>;
/// `α_k(x)` on the boundary of a sign-definite cavity `k`.
pub type WeightFn = Arc<dyn Fn(usize, Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct RobinModel {
    pub a: RobinFn,
    /// Lipschitz constant of `a` in `u`.
    pub a0: f64,
    /// `a(x, u) u ≥ −c1 ε η^{1−n} u²` on every Robin boundary.
    pub c1: f64,
    pub mu: f64,
    pub alpha: Option<WeightFn>,
    /// Weight bounds: `‖α_k‖²_{L2} ≤ c2 (εη)^{n−1}` and `‖α_k‖_{L1} ≥ c3 (εη)^{n−1}`.
    pub c2: f64,
    pub c3: f64,
    pub label: String,
}

impl fmt::Debug for RobinModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RobinModel")
            .field("label", &self.label)
            .field("a0", &self.a0)
            .field("c1", &self.c1)
            .field("mu", &self.mu)
            .field("c2", &self.c2)
            .field("c3", &self.c3)
            .finish()
    }
}

/// Weight bounds that an `α ≡ 1` weight meets with equality on the unit-disk reference shape.
const UNIT_DISK_PERIMETER: f64 = 2.0 * std::f64::consts::PI;

impl RobinModel {
    /// `a = µ u` with weight `α ≡ 1`.
    pub fn linear(mu: f64) -> Self {
        RobinModel {
            a: Arc::new(move |_, _, u| mu * u),
            a0: mu,
            c1: 0.0,
            mu,
            alpha: Some(Arc::new(|_, _| 1.0)),
            c2: UNIT_DISK_PERIMETER,
            c3: UNIT_DISK_PERIMETER,
            label: format!("linear(mu={mu})"),
        }
    }

    /// `a = µ (u + β tanh u)`, monotone for `β ≥ 0`.
    pub fn tanh(mu: f64, beta: f64) -> Self {
        RobinModel {
            a: Arc::new(move |_, _, u| mu * (u + beta * u.tanh())),
            a0: mu * (1.0 + beta.abs()),
            c1: 0.0,
            label: format!("tanh(mu={mu}, beta={beta})"),
            ..Self::linear(mu)
        }
    }

    /// Homogeneous Neumann behaviour on every Robin edge.
    pub fn zero() -> Self {
        RobinModel {
            a: Arc::new(|_, _, _| 0.0),
            a0: 0.0,
            c1: 0.0,
            mu: 1.0,
            alpha: None,
            c2: UNIT_DISK_PERIMETER,
            c3: UNIT_DISK_PERIMETER,
            label: "zero".into(),
        }
    }

    pub fn eval(&self, cavity: usize, x: Point, u: f64) -> f64 {
        (self.a)(cavity, x, u)
    }

    /// Central difference of `a` in `u` with step `1e-6 (1 + |u|)`.
    pub fn derivative(&self, cavity: usize, x: Point, u: f64) -> f64 {
        let h = 1e-6 * (1.0 + u.abs());
        (self.eval(cavity, x, u + h) - self.eval(cavity, x, u - h)) / (2.0 * h)
    }

    /// Samples the Lipschitz, sign and definiteness conditions at the given
    /// boundary points. `definite` marks points on sign-definite cavities.
    pub fn check_invariants(
        &self,
        eps: f64,
        eta: f64,
        points: &[(usize, Point, bool)],
        samples_per_point: usize,
        seed: u64,
    ) -> RobinInvariantReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sign_floor = self.c1 * eps / eta;
        let mut report = RobinInvariantReport::default();
        for &(k, x, definite) in points {
            for _ in 0..samples_per_point {
                let u1: f64 = rng.random_range(-10.0..=10.0);
                let u2: f64 = rng.random_range(-10.0..=10.0);
                let (a1, a2) = (self.eval(k, x, u1), self.eval(k, x, u2));
                report.samples += 1;
                if !(a1.is_finite() && a2.is_finite()) {
                    report.non_finite += 1;
                    continue;
                }
                let tol = 1e-12 * (1.0 + a1.abs() + a2.abs());
                if (a1 - a2).abs() > self.a0 * (u1 - u2).abs() + tol {
                    report.lipschitz_violations += 1;
                }
                if a1 * u1 < -sign_floor * u1 * u1 - tol {
                    report.sign_violations += 1;
                }
                if definite {
                    let alpha = self.alpha.as_ref().map_or(0.0, |w| w(k, x));
                    if a1 * u1 < self.mu * alpha * u1 * u1 - tol * (1.0 + u1.abs()) {
                        report.definiteness_violations += 1;
                    }
                }
            }
        }
        report
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RobinInvariantReport {
    pub samples: usize,
    pub non_finite: usize,
    pub lipschitz_violations: usize,
    pub sign_violations: usize,
    pub definiteness_violations: usize,
}

impl RobinInvariantReport {
    pub fn pass(&self) -> bool {
        self.non_finite == 0 && self.lipschitz_violations == 0 && self.sign_violations == 0 && self.definiteness_violations == 0
    }
}

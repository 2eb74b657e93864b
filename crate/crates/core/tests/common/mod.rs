#![allow(dead_code)]

use perforate::geometry::{BcRule, Generator, LayoutConfig, OuterDomain, Radii, ReferenceShape};
use perforate::rates::{EtaRule, LayoutTemplate, MeshBudget, Scenario, SourceSpec, Theorem, Tolerances};
use perforate::Point;

/// Smallest `k` with a nontrivial radial solution of `y'' + y'/r + k² y = 0` on
/// `a < r < b`, `y(a) = 0`, `y'(b) = 0`. RK4 shooting in `r` with bisection on `k`.
pub fn annulus_dirichlet_neumann_k(a: f64, b: f64) -> f64 {
    let end_slope = |k: f64| {
        let steps = 4000;
        let h = (b - a) / steps as f64;
        let rhs = |r: f64, y: f64, dy: f64| -dy / r - k * k * y;
        let (mut r, mut y, mut dy) = (a, 0.0, 1.0);
        for _ in 0..steps {
            let (k1y, k1d) = (dy, rhs(r, y, dy));
            let (k2y, k2d) = (dy + 0.5 * h * k1d, rhs(r + 0.5 * h, y + 0.5 * h * k1y, dy + 0.5 * h * k1d));
            let (k3y, k3d) = (dy + 0.5 * h * k2d, rhs(r + 0.5 * h, y + 0.5 * h * k2y, dy + 0.5 * h * k2d));
            let (k4y, k4d) = (dy + h * k3d, rhs(r + h, y + h * k3y, dy + h * k3d));
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            dy += h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
            r += h;
        }
        dy
    };
    // y'(b) starts positive at k = 0 and changes sign at the first eigenvalue.
    let mut lo = 1e-6;
    let mut hi = lo;
    while end_slope(hi) > 0.0 {
        hi *= 1.5;
        if hi < 1e-3 {
            hi = 1e-3;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if end_slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn layout_config(eps: f64, eta: f64, generator: Generator) -> LayoutConfig {
    LayoutConfig {
        epsilon: eps,
        eta,
        generator,
        shape: ReferenceShape::Disk { radius: 1.0 },
        inner_ball: None,
        bc: BcRule::AllDirichlet,
        radii: Radii { r1: 0.5, r2: 1.0, r3: 1.9, r4: 3.0 },
        outer: OuterDomain::Box { min: [0.0, 0.0], max: [1.0, 1.0] },
    }
}

/// Periodic Dirichlet disks with fixed η = 1/2 and f ≡ 1 on the box `(0, side)²`.
pub fn theorem2_scenario(epsilons: &[f64], side: f64) -> Scenario {
    Scenario {
        theorem: Theorem::T2,
        epsilons: epsilons.to_vec(),
        eta: EtaRule::Fixed { value: 0.5 },
        mu: None,
        layout: LayoutTemplate {
            generator: Generator::Periodic,
            shape: ReferenceShape::Disk { radius: 1.0 },
            inner_ball: None,
            bc: BcRule::AllDirichlet,
            radii: Radii { r1: 0.5, r2: 1.0, r3: 1.9, r4: 3.0 },
            outer: OuterDomain::Box { min: [0.0, 0.0], max: [side, side] },
        },
        coefficients: Default::default(),
        robin: Default::default(),
        source: SourceSpec::Constant { value: 1.0 },
        lambda: 0.0,
        mesh: MeshBudget::default(),
        tolerance: Tolerances::default(),
    }
}

/// Manufactured solution `w = (1 − |x|²)(1 + x/2 + y²/4)` on the annulus
/// `ρ < |x| < 1`: it vanishes on the outer circle.
pub struct Manufactured;

impl Manufactured {
    pub fn w(p: Point) -> f64 {
        let s = 1.0 - p[0] * p[0] - p[1] * p[1];
        s * (1.0 + 0.5 * p[0] + 0.25 * p[1] * p[1])
    }

    pub fn grad(p: Point) -> [f64; 2] {
        let s = 1.0 - p[0] * p[0] - p[1] * p[1];
        let q = 1.0 + 0.5 * p[0] + 0.25 * p[1] * p[1];
        [-2.0 * p[0] * q + 0.5 * s, -2.0 * p[1] * q + 0.5 * p[1] * s]
    }

    /// `−Δw`.
    pub fn source(p: Point) -> f64 {
        let s = 1.0 - p[0] * p[0] - p[1] * p[1];
        let q = 1.0 + 0.5 * p[0] + 0.25 * p[1] * p[1];
        // Δ(sq) = qΔs + 2∇s·∇q + sΔq with Δs = −4, ∇q = (1/2, y/2), Δq = 1/2.
        let lap = -4.0 * q + 2.0 * (-2.0 * p[0] * 0.5 - 2.0 * p[1] * 0.5 * p[1]) + 0.5 * s;
        -lap
    }

    /// Co-normal data on the inner circle for `∂w/∂ν + a(w) = g`, with ν pointing
    /// into the hole.
    pub fn robin_data(p: Point, a: impl Fn(f64) -> f64) -> f64 {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let n = [-p[0] / r, -p[1] / r];
        let g = Self::grad(p);
        g[0] * n[0] + g[1] * n[1] + a(Self::w(p))
    }
}

pub fn line(ok: bool, id: &str, detail: &str) -> String {
    format!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" })
}

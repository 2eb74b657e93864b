mod common;

use std::f64::consts::PI;

use common::{layout_config, theorem2_scenario};
use perforate::cell::{solve_v1, CellParams};
use perforate::fem::{
    assemble, assemble_robin_residual, boundary_trace_norm, local_poincare_constant, norms_where, solve, CoefficientField,
    PoincareVariant, ProblemData, RobinModel, SolverOptions,
};
use perforate::geometry::{build_layout, BcRule, Generator, ReferenceShape};
use perforate::mesh::{annulus, default_boundary_divisions, triangulate, BoundaryTag, Mesh};
use perforate::rates::{fit_slope, run_sweep, sharpness_bump, sharpness_dirichlet, SharpnessSetup};
use proptest::prelude::*;

fn centroid(mesh: &Mesh, t: usize) -> [f64; 2] {
    let p = mesh.triangles[t].map(|i| mesh.vertices[i]);
    [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
}

/// `‖u‖²_{∂ω}` over the scale-free combination `εηϰ‖∇u‖²_{B_{εR3}\ω} + ε⁻¹η‖u‖²_{B_{εR3}\B_{εR2}}`
/// for the Neumann-hole solution of `−Δu = 1 + x` with one cavity at the centre.
fn trace_ratio(eps: f64, eta: f64) -> f64 {
    let mut config = layout_config(eps, eta, Generator::Explicit { centers: vec![[0.5, 0.5]] });
    config.bc = BcRule::AllRobin { sign_definite: true };
    let layout = build_layout(&config).unwrap();
    let h = eps / 4.0;
    let mesh = triangulate(&layout, h, default_boundary_divisions(&layout, h)).unwrap();
    let u = solve(
        &mesh,
        &CoefficientField::laplacian(),
        &RobinModel::zero(),
        &ProblemData::new(|p| 1.0 + p[0]),
        &SolverOptions::default(),
    )
    .unwrap()
    .values;
    let r = |t: usize| {
        let c = centroid(&mesh, t);
        ((c[0] - 0.5).powi(2) + (c[1] - 0.5).powi(2)).sqrt()
    };
    let (r2, r3) = (eps * layout.radii.r2, eps * layout.radii.r3);
    let grad = norms_where(&mesh, &u, |t| r(t) < r3).h1_semi.powi(2);
    let shell = norms_where(&mesh, &u, |t| r(t) > r2 && r(t) < r3).l2.powi(2);
    let trace = boundary_trace_norm(&mesh, &u, BoundaryTag::CavityRobin(0)).unwrap();
    let kappa = eta.ln().abs() + 1.0;
    trace / (eps * eta * kappa * grad + eta / eps * shell)
}

#[test]
fn trace_inequality_holds_with_one_constant() {
    let c = trace_ratio(0.1, 0.5);
    assert!(c.is_finite() && c > 0.0);
    for eps in [0.1, 0.05] {
        for eta in [0.5, 0.25, 0.125] {
            let q = trace_ratio(eps, eta);
            assert!(q <= 1.1 * c, "ε {eps} η {eta}: ratio {q} against calibrated {c}");
        }
    }
}

#[test]
fn dirichlet_hole_constant_scales_with_eps_squared() {
    for eta in [0.5, 0.2] {
        let at = |eps: f64| {
            let layout = build_layout(&layout_config(eps, eta, Generator::Explicit { centers: vec![[0.5, 0.5]] })).unwrap();
            local_poincare_constant(&layout, 0, PoincareVariant::DirichletHole, 64).unwrap()
        };
        let (coarse, fine) = (at(0.1), at(0.025));
        let ratio = coarse / fine / 16.0;
        assert!((ratio - 1.0).abs() < 0.01, "η {eta}: {ratio}");
    }
}

#[test]
fn discrete_c4_matches_polygon_geometry() {
    for eta in [1.0, 0.5, 0.2] {
        let params = CellParams::default();
        let v1 = solve_v1(eta, &params).unwrap();
        let shape = ReferenceShape::Disk { radius: eta };
        let pts = shape.boundary_points(params.n_theta);
        let n = pts.len();
        let perimeter: f64 = (0..n)
            .map(|i| {
                let (a, b) = (pts[i], pts[(i + 1) % n]);
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
            })
            .sum();
        let hole: f64 = 0.5 * (0..n).map(|i| pts[i][0] * pts[(i + 1) % n][1] - pts[(i + 1) % n][0] * pts[i][1]).sum::<f64>();
        let expected = (16.0 - hole) / perimeter;
        assert!((v1.c4 - expected).abs() < 1e-9 * expected, "η {eta}: {} vs {expected}", v1.c4);
        let smooth = (16.0 - shape.area()) / (2.0 * PI * eta);
        assert!((v1.c4 - smooth).abs() < 0.01 * smooth);
    }
}

#[test]
fn t2_norms_decrease_in_the_asymptotic_range() {
    let result = run_sweep(&theorem2_scenario(&[0.25, 0.125, 0.0625], 2.0)).unwrap();
    let settled: Vec<_> = result.records.iter().filter(|r| r.theta2 < 0.1).collect();
    assert!(settled.len() >= 2);
    for w in settled.windows(2) {
        assert!(w[1].eps < w[0].eps);
        assert!(w[1].l2_norm / w[1].f_norm <= w[0].l2_norm / w[0].f_norm);
        assert!(w[1].w12_norm / w[1].f_norm <= w[0].w12_norm / w[0].f_norm);
    }
}

#[test]
fn sweep_and_cell_composition_agree_on_the_dirichlet_rate() {
    let eps = [0.125, 0.0625];
    let sweep = run_sweep(&theorem2_scenario(&eps, 4.0)).unwrap();
    let direct: Vec<(f64, f64)> = sweep.records.iter().map(|r| (r.eps, r.l2_norm / r.f_norm)).collect();
    let composed = sharpness_dirichlet(&eps, &sharpness_bump(true), &SharpnessSetup::default()).unwrap();
    let homogenized: Vec<(f64, f64)> = composed.rows.iter().map(|r| (r.eps, r.l2_ratio)).collect();
    let (a, b) = (fit_slope(&direct).unwrap().slope, fit_slope(&homogenized).unwrap().slope);
    assert!((a - b).abs() < 0.3, "sweep {a} against composition {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn robin_tangent_keeps_the_operator_symmetric(mu in 0.2f64..8.0, beta in 0.0f64..1.0, seed in 0u64..1000, linear: bool) {
        let mesh = annulus([0.0, 0.0], 0.3, 1.0, 24, None, BoundaryTag::CavityRobin(0), BoundaryTag::OuterDirichlet).unwrap();
        let n = mesh.vertices.len();
        let u: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 250.0 - 2.0).collect();
        let robin = if linear { RobinModel::linear(mu) } else { RobinModel::tanh(mu, beta) };
        let k = assemble(&mesh, &CoefficientField::laplacian(), 0.0).unwrap().stiffness;
        let t = assemble_robin_residual(&mesh, &robin, &u).unwrap().tangent_matrix();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
        let form = |a: &[f64], b: &[f64]| k.bilinear(b, a) + t.bilinear(b, a);
        let (xy, yx) = (form(&x, &y), form(&y, &x));
        prop_assert!((xy - yx).abs() <= 1e-12 * xy.abs().max(yx.abs()).max(1.0));
    }

    #[test]
    fn galerkin_residual_is_small(f0 in -3.0f64..3.0, fx in -2.0f64..2.0, c in 0.0f64..5.0) {
        prop_assume!(f0.abs() + fx.abs() > 1e-3);
        let mesh = annulus([0.0, 0.0], 0.25, 1.0, 24, None, BoundaryTag::CavityDirichlet(0), BoundaryTag::OuterDirichlet).unwrap();
        let coeffs = CoefficientField::laplacian().with_constant_reaction(c);
        let s = solve(&mesh, &coeffs, &RobinModel::zero(), &ProblemData::new(move |p| f0 + fx * p[0]), &SolverOptions::default()).unwrap();
        prop_assert!(s.residual <= 1e-10 * s.reference);
    }

    #[test]
    fn jittered_meshes_are_sound_and_deterministic(eta in 0.2f64..0.6, amplitude in 0.0f64..0.5, seed in 0u64..500) {
        let layout = build_layout(&layout_config(0.125, eta, Generator::Jittered { amplitude, seed })).unwrap();
        let h = 0.05;
        let divisions = default_boundary_divisions(&layout, h);
        let mesh = triangulate(&layout, h, divisions).unwrap();
        prop_assert!(mesh.validate().is_empty());
        let holes: f64 = (0..layout.cavities.len()).map(|k| layout.cavity_area(k)).sum();
        let exact = 1.0 - holes;
        // Inscribed polygons remove slightly less than the disks.
        prop_assert!(mesh.area() >= exact - 1e-12);
        prop_assert!(mesh.area() <= exact + 0.01 * holes);
        for k in 0..layout.cavities.len() {
            prop_assert_eq!(mesh.loop_count(BoundaryTag::CavityDirichlet(k)), Some(1));
        }
        let again = triangulate(&layout, h, divisions).unwrap();
        prop_assert_eq!(&mesh.triangles, &again.triangles);
        prop_assert!(mesh.vertices.iter().zip(&again.vertices).all(|(a, b)| a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits()));
    }
}

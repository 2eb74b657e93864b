use std::fs;
use std::path::Path;
use std::time::Instant;

use perforate::cell::{self, CellParams};
use perforate::fem::{self, norms, SolverOptions};
use perforate::geometry::{kappa, smallness_indicators, CavityBc};
use perforate::mesh::{mesh_quality, write_mesh, write_values};
use perforate::rates::{
    read_csv, run_sweep, sharpness_dirichlet, sharpness_robin, verdicts_from_records, write_csv, RatesError, Scenario,
    Tolerances, Verdict,
};
use perforate::scenario::{self, ScenarioFile};
use serde_json::{json, Value};

use crate::{manifest, plot, Args, Command, Outcome};

/// Artifact bookkeeping for one run.
struct Run<'a> {
    out: &'a Path,
    artifacts: Vec<String>,
}

impl Run<'_> {
    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), Outcome> {
        fs::write(self.out.join(name), bytes).map_err(|e| Outcome::Config(format!("cannot write {name}: {e}")))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), Outcome> {
        self.write(name, serde_json::to_string_pretty(value).expect("serializable") + "\n")
    }
}

pub fn run(args: &Args, start: Instant) -> Outcome {
    let text = match fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => return Outcome::Config(format!("cannot read {}: {e}", args.scenario.display())),
    };
    let file = match scenario::parse(&text) {
        Ok(f) => f,
        Err(e) => return Outcome::Config(format!("{}: {e}", args.scenario.display())),
    };
    if let Err(e) = fs::create_dir_all(&args.out) {
        return Outcome::Config(format!("cannot create {}: {e}", args.out.display()));
    }
    let seed = args.seed.unwrap_or(file.seed);
    let mut run = Run { out: &args.out, artifacts: Vec::new() };
    let outcome = match dispatch(args, &file, seed, &mut run) {
        Ok(o) | Err(o) => o,
    };
    if let Err(e) = manifest::write(&args.out, args, &text, seed, &run.artifacts, start.elapsed().as_millis(), outcome.code()) {
        return Outcome::Config(format!("cannot write manifest: {e}"));
    }
    outcome
}

fn classify(e: RatesError) -> Outcome {
    if e.is_nonconvergence() {
        Outcome::NonConvergence(e.to_string())
    } else {
        Outcome::Config(e.to_string())
    }
}

fn sweep_of<'a>(file: &'a ScenarioFile, command: Command) -> Result<&'a Scenario, Outcome> {
    file.sweep.as_ref().ok_or_else(|| Outcome::Config(format!("`{}` needs a [sweep] section (field `sweep`)", command.name())))
}

fn with_tolerance(s: &Scenario, tol: Option<f64>) -> Scenario {
    let mut s = s.clone();
    if let Some(t) = tol {
        s.tolerance = Tolerances { l2: t, w12: t };
    }
    s
}

fn dispatch(args: &Args, file: &ScenarioFile, seed: u64, run: &mut Run) -> Result<Outcome, Outcome> {
    match args.command {
        Command::CheckGeometry => check_geometry(sweep_of(file, args.command)?, seed, run),
        Command::Mesh => mesh(sweep_of(file, args.command)?, run),
        Command::Solve => solve(sweep_of(file, args.command)?, run),
        Command::Sweep => sweep(&with_tolerance(sweep_of(file, args.command)?, args.tol), args, run),
        Command::Report => report(&with_tolerance(sweep_of(file, args.command)?, args.tol), run),
        Command::Cell => cell_command(file, run),
        Command::Sharpness => sharpness(file, args.tol, run),
    }
}

fn check_geometry(s: &Scenario, seed: u64, run: &mut Run) -> Result<Outcome, Outcome> {
    let mut entries = Vec::new();
    let mut all_pass = true;
    for &eps in &s.epsilons {
        let (layout, report) = s.check_geometry(eps).map_err(classify)?;
        let robin = s.robin_model(eps);
        let points: Vec<_> = layout
            .cavities
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.bc, CavityBc::Robin { .. }))
            .flat_map(|(k, c)| {
                let r = layout.cavity_scale();
                let definite = matches!(c.bc, CavityBc::Robin { sign_definite: true });
                (0..4).map(move |i| {
                    let t = std::f64::consts::FRAC_PI_2 * i as f64;
                    (k, [c.center[0] + r * t.cos(), c.center[1] + r * t.sin()], definite)
                })
            })
            .collect();
        let invariants = robin.check_invariants(eps, layout.eta, &points, 16, seed);
        let mu = s.mu_at(eps);
        let (t1, t2) = smallness_indicators(eps, layout.eta, mu.unwrap_or(1.0), 2).map_err(|e| Outcome::Config(e.to_string()))?;
        let pass = report.pass() && invariants.pass();
        all_pass &= pass;
        entries.push(json!({
            "eps": eps,
            "eta": layout.eta,
            "mu": mu,
            "kappa": kappa(layout.eta, 2).ok(),
            "theta1": mu.map(|_| t1),
            "theta2": t2,
            "cavities": layout.cavities.len(),
            "report": report,
            "robin_invariants": invariants,
            "pass": pass,
        }));
    }
    run.json("geometry.json", &json!({ "pass": all_pass, "epsilons": entries }))?;
    Ok(if all_pass { Outcome::Pass } else { Outcome::Failed("geometry checks failed".into()) })
}

fn mesh(s: &Scenario, run: &mut Run) -> Result<Outcome, Outcome> {
    let mut stats = Vec::new();
    for (i, &eps) in s.epsilons.iter().enumerate() {
        let layout = s.layout(eps).map_err(classify)?;
        let m = s.build_mesh(eps, &layout).map_err(classify)?;
        let mut buf = Vec::new();
        write_mesh(&m, &mut buf).expect("in-memory write");
        let name = format!("mesh_{i}.txt");
        run.write(&name, buf)?;
        stats.push(json!({ "eps": eps, "file": name, "vertices": m.vertices.len(), "quality": mesh_quality(&m) }));
    }
    run.json("mesh.json", &json!({ "meshes": stats }))?;
    Ok(Outcome::Pass)
}

fn solve(s: &Scenario, run: &mut Run) -> Result<Outcome, Outcome> {
    let mut entries = Vec::new();
    for (i, &eps) in s.epsilons.iter().enumerate() {
        let layout = s.layout(eps).map_err(classify)?;
        let m = s.build_mesh(eps, &layout).map_err(classify)?;
        let source = s.source;
        let mut data = fem::ProblemData::new(move |x| source.eval(x));
        data.lambda = s.lambda;
        let sol = fem::solve(&m, &s.coefficients.field(), &s.robin_model(eps), &data, &SolverOptions::default())
            .map_err(|e| classify(RatesError::Solver { eps, source: e }))?;
        let mut buf = Vec::new();
        write_mesh(&m, &mut buf).expect("in-memory write");
        run.write(&format!("mesh_{i}.txt"), buf)?;
        let mut buf = Vec::new();
        write_values(&m, &sol.values, &mut buf).expect("in-memory write");
        let name = format!("solution_{i}.txt");
        run.write(&name, buf)?;
        entries.push(json!({
            "eps": eps,
            "file": name,
            "norms": norms(&m, &sol.values),
            "newton_iters": sol.iterations,
            "picard_steps": sol.picard_steps,
            "residual": sol.residual,
            "dofs": sol.n_dofs,
        }));
    }
    run.json("solve.json", &json!({ "solutions": entries }))?;
    Ok(Outcome::Pass)
}

fn verdict_block(verdicts: &[Verdict]) -> Value {
    json!(verdicts
        .iter()
        .map(|v| json!({
            "theorem": v.theorem,
            "norm": v.norm,
            "fitted_slope": v.fitted_slope,
            "residual": v.residual,
            "predicted_exponent": v.predicted_exponent,
            "pass": v.pass,
            "status": v.status,
            "slope_vs_bound": v.slope_vs_bound,
            "tolerance": v.tolerance,
        }))
        .collect::<Vec<_>>())
}

fn verdict_outcome(verdicts: &[Verdict]) -> Outcome {
    let failed: Vec<String> =
        verdicts.iter().filter(|v| v.bearing() && !v.pass).map(|v| format!("{:?} slope {:?}", v.norm, v.fitted_slope)).collect();
    if failed.is_empty() {
        Outcome::Pass
    } else {
        Outcome::Failed(failed.join("; "))
    }
}

fn sweep(s: &Scenario, args: &Args, run: &mut Run) -> Result<Outcome, Outcome> {
    let result = run_sweep(s).map_err(classify)?;
    let mut csv = Vec::new();
    write_csv(&result.records, args.timings, &mut csv).map_err(|e| Outcome::Config(e.to_string()))?;
    run.write("sweep.csv", csv)?;
    run.json("verdict.json", &json!({ "verdicts": verdict_block(&result.verdicts), "refinement_probe": result.probe }))?;
    if args.plot {
        run.write("sweep.svg", plot::sweep_svg(&result.records, &result.verdicts))?;
    }
    Ok(verdict_outcome(&result.verdicts))
}

/// Re-runs the verdict stage on a saved sweep table.
fn report(s: &Scenario, run: &mut Run) -> Result<Outcome, Outcome> {
    let path = run.out.join("sweep.csv");
    let bytes = fs::read(&path).map_err(|e| Outcome::Config(format!("cannot read {}: {e}", path.display())))?;
    let records = read_csv(bytes.as_slice()).map_err(|e| Outcome::Config(format!("{}: {e}", path.display())))?;
    let verdicts = verdicts_from_records(s.theorem, &s.tolerance, &records).map_err(classify)?;
    let block = verdict_block(&verdicts);
    let previous: Option<Value> = fs::read_to_string(run.out.join("verdict.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<Value>(&t).ok())
        .and_then(|v| v.get("verdicts").cloned());
    let reproduced = previous.as_ref().map(|p| *p == block);
    run.json("report.json", &json!({ "records": records, "verdicts": block, "reproduces_saved_verdicts": reproduced }))?;
    Ok(verdict_outcome(&verdicts))
}

fn cell_command(file: &ScenarioFile, run: &mut Run) -> Result<Outcome, Outcome> {
    let c = file.cell.as_ref().ok_or_else(|| Outcome::Config("`cell` needs a [cell] section (field `cell`)".into()))?;
    let cell_err = |e: cell::CellError| classify(RatesError::Cell(e));
    let params: CellParams = c.params;
    let v0 = cell::solve_v0(c.eta, &params).map_err(cell_err)?;
    let v1 = cell::solve_v1(c.eta, &params).map_err(cell_err)?;
    let v2 = cell::solve_v2(&v1.field).map_err(cell_err)?;
    let mut buf = Vec::new();
    write_mesh(&v0.mesh, &mut buf).expect("in-memory write");
    run.write("cell_mesh_dirichlet.txt", buf)?;
    let mut buf = Vec::new();
    write_mesh(&v1.field.mesh, &mut buf).expect("in-memory write");
    run.write("cell_mesh_neumann.txt", buf)?;
    for (name, f) in [("v0.txt", &v0), ("v1.txt", &v1.field), ("v2.txt", &v2)] {
        let mut buf = Vec::new();
        write_values(&f.mesh, &f.values, &mut buf).expect("in-memory write");
        run.write(name, buf)?;
    }
    let mut expansion = Vec::new();
    for &em in &c.epsmu {
        let vmu = cell::solve_vmu(c.eta, em, &params).map_err(cell_err)?;
        let r = cell::verify_expansion(&vmu, &v1.field, v1.c4, em).map_err(cell_err)?;
        expansion.push(json!({ "epsmu": em, "remainder_w12": r, "vmu_norms": vmu.norms }));
    }
    let remainder_ratio = if c.epsmu.len() >= 2 {
        let r: Vec<f64> = expansion.iter().map(|e| e["remainder_w12"].as_f64().unwrap_or(f64::NAN)).collect();
        Some(r[0] / r[1])
    } else {
        None
    };
    let c5 = if c.c5_etas.is_empty() { None } else { Some(cell::fit_c5(&c.c5_etas, &params).map_err(cell_err)?) };
    let x = if c.eta < 1.0 { Some(cell::solve_x(c.eta, 1.0, 1.9, params.n_theta).map_err(cell_err)?) } else { None };
    run.json(
        "cell.json",
        &json!({
            "eta": c.eta,
            "params": params,
            "v0": { "norms": v0.norms, "integral": v0.integral(), "periodicity_defect": v0.periodicity_defect() },
            "v1": { "norms": v1.field.norms, "c4": v1.c4, "c4_exact": v1.c4_exact, "compatibility_residual": v1.compatibility_residual },
            "v2": { "norms": v2.norms, "boundary_integral": v2.boundary_integral() },
            "g2_eta": cell::fundamental_scaling(c.eta, 2).ok(),
            "expansion": expansion,
            "remainder_ratio": remainder_ratio,
            "c5_fit": c5,
            "x_flux": x.map(|x| json!({ "r5": x.r5, "flux": x.flux, "flux_exact": x.flux_exact })),
        }),
    )?;
    Ok(Outcome::Pass)
}

fn sharpness(file: &ScenarioFile, tol: Option<f64>, run: &mut Run) -> Result<Outcome, Outcome> {
    let sh = file.sharpness.as_ref().ok_or_else(|| Outcome::Config("`sharpness` needs a [sharpness] section (field `sharpness`)".into()))?;
    let mut out = serde_json::Map::new();
    let mut failures = Vec::new();
    if let Some(d) = &sh.dirichlet {
        let t = tol.unwrap_or(d.tolerance);
        let r = sharpness_dirichlet(&d.epsilons, &d.bump(), &sh.setup).map_err(classify)?;
        let last = r.rows.last().expect("nonempty list");
        let l2_dev = (last.l2_scaled / r.v0_l2 - 1.0).abs();
        let w12_dev = (last.w12_scaled / r.v0_grad - 1.0).abs();
        let pass = l2_dev <= t && w12_dev <= t;
        if !pass {
            failures.push(format!("dirichlet: relative deviations {l2_dev:.3} (L2), {w12_dev:.3} (W12) exceed {t}"));
        }
        out.insert(
            "dirichlet".into(),
            json!({
                "table": r,
                "l2_deviation": l2_dev,
                "w12_deviation": w12_dev,
                "corrected_l2_deviation": (last.l2_scaled / r.corrected_l2 - 1.0).abs(),
                "corrected_w12_deviation": (last.w12_scaled / r.corrected_grad - 1.0).abs(),
                "tolerance": t,
                "pass": pass,
            }),
        );
    }
    if let Some(rb) = &sh.robin {
        let t = tol.unwrap_or(rb.tolerance);
        let r = sharpness_robin(&rb.epsilons, &rb.mu, &rb.bump(), &sh.setup).map_err(classify)?;
        let dev: Vec<f64> = r.rows.iter().map(|row| (row.l2_scaled - 1.0).abs()).collect();
        let decreasing = dev.windows(2).all(|w| w[1] < w[0]);
        let last = *dev.last().expect("nonempty list");
        let pass = last <= t && decreasing;
        if !pass {
            failures.push(format!("robin: deviations {dev:?} (tolerance {t}, must decrease)"));
        }
        out.insert("robin".into(), json!({ "table": r, "deviations": dev, "decreasing": decreasing, "tolerance": t, "pass": pass }));
    }
    if out.is_empty() {
        return Err(Outcome::Config("[sharpness] needs a dirichlet or robin run (field `sharpness`)".into()));
    }
    run.json("sharpness.json", &Value::Object(out))?;
    Ok(if failures.is_empty() { Outcome::Pass } else { Outcome::Failed(failures.join("; ")) })
}

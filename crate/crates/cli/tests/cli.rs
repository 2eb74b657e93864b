use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(command: &str, scenario: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perforate"))
        .args([command, "--scenario"])
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const PERIODIC_SWEEP: &str = r#"
name = "small"

[sweep]
theorem = "T2"
epsilons = [0.25, 0.125, 0.0625]
eta = { rule = "fixed", value = 0.5 }
source = { kind = "constant", value = 1.0 }

[sweep.layout]
generator = { kind = "periodic" }
bc = { rule = "all_dirichlet" }
outer = { kind = "box", min = [0.0, 0.0], max = [4.0, 4.0] }
"#;

#[test]
fn check_geometry_accepts_the_periodic_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("check-geometry", &scenario("theorem2_periodic.toml"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("geometry.json"));
    assert_eq!(report["pass"], Value::Bool(true));
    assert_eq!(report["epsilons"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn sweep_is_reproducible_and_report_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.toml");
    fs::write(&file, PERIODIC_SWEEP).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));

    let first = run("sweep", &file, &a);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let csv = fs::read(a.join("sweep.csv")).unwrap();
    let rows = String::from_utf8(csv.clone()).unwrap().lines().count();
    assert_eq!(rows, 4, "header and one row per ε");
    let verdicts = json(&a.join("verdict.json"));
    let list = verdicts["verdicts"].as_array().unwrap();
    assert!(!list.is_empty());
    assert!(list.iter().all(|v| v["pass"] == Value::Bool(true)), "{verdicts}");

    assert_eq!(run("sweep", &file, &b).status.code(), Some(0));
    assert_eq!(csv, fs::read(b.join("sweep.csv")).unwrap(), "CSV bytes differ between identical runs");

    let report = run("report", &file, &a);
    assert_eq!(report.status.code(), Some(0), "{}", String::from_utf8_lossy(&report.stderr));
    assert_eq!(json(&a.join("report.json"))["reproduces_saved_verdicts"], Value::Bool(true));

    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["scenario"].as_str().unwrap(), PERIODIC_SWEEP);
    assert_eq!(fs::read_to_string(&file).unwrap(), PERIODIC_SWEEP, "scenario file was modified");
}

#[test]
fn malformed_eta_rule_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    fs::write(&file, PERIODIC_SWEEP.replace(r#"rule = "fixed", value = 0.5"#, r#"rule = "wobbly", value = 0.5"#)).unwrap();
    let out = run("sweep", &file, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep.eta"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn overlapping_cavities_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("overlap.toml");
    let text = PERIODIC_SWEEP
        .replace(r#"generator = { kind = "periodic" }"#, r#"generator = { kind = "explicit", centers = [[2.0, 2.0], [2.05, 2.0]] }"#);
    fs::write(&file, text).unwrap();
    let out = run("sweep", &file, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("cell", &scenario("theorem2_periodic.toml"), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cell"));
}

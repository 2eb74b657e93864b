use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::Args;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything needed to re-run the experiment: the scenario text itself, its
/// hash, the effective flags and the hashes of the artifacts written.
pub fn write(out: &Path, args: &Args, scenario_text: &str, seed: u64, artifacts: &[String], wall_ms: u128, exit_code: u8) -> std::io::Result<()> {
    let hashes: Vec<Value> = artifacts
        .iter()
        .map(|name| {
            let hash = fs::read(out.join(name)).map(|b| sha256_hex(&b)).unwrap_or_default();
            json!({ "file": name, "sha256": hash })
        })
        .collect();
    let manifest = json!({
        "command": args.command.name(),
        "scenario_path": args.scenario.display().to_string(),
        "scenario_sha256": sha256_hex(scenario_text.as_bytes()),
        "scenario": scenario_text,
        "seed": seed,
        "jobs": args.jobs,
        "tol": args.tol,
        "plot": args.plot,
        "timings": args.timings,
        "versions": {
            "perforate": env!("CARGO_PKG_VERSION"),
        },
        "wall_ms": wall_ms,
        "exit_code": exit_code,
        "artifacts": hashes,
    });
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")
}

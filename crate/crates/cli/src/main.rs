//! `perforate`: runs the experiments described by a scenario file.

mod commands;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    CheckGeometry,
    Mesh,
    Solve,
    Cell,
    Sweep,
    Sharpness,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckGeometry => "check-geometry",
            Command::Mesh => "mesh",
            Command::Solve => "solve",
            Command::Cell => "cell",
            Command::Sweep => "sweep",
            Command::Sharpness => "sharpness",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "perforate", version, about = "Operator-estimate experiments in perforated domains")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Overrides every verdict tolerance of the scenario.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Writes an SVG log–log plot next to the sweep table.
    #[arg(long)]
    pub plot: bool,
    /// Records wall times in the CSV (the table is then no longer byte-reproducible).
    #[arg(long)]
    pub timings: bool,
}

/// How a run ended, mapped to the process exit status.
#[derive(Debug)]
pub enum Outcome {
    Pass,
    Failed(String),
    Config(String),
    NonConvergence(String),
}

impl Outcome {
    pub fn code(&self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::Failed(_) => 1,
            Outcome::Config(_) => 2,
            Outcome::NonConvergence(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let start = Instant::now();
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = commands::run(&args, start);
    match &outcome {
        Outcome::Pass => {}
        Outcome::Failed(m) => eprintln!("verdict failed: {m}"),
        Outcome::Config(m) => eprintln!("configuration error: {m}"),
        Outcome::NonConvergence(m) => eprintln!("solver did not converge: {m}"),
    }
    ExitCode::from(outcome.code())
}

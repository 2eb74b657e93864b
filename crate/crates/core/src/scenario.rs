//! Scenario files: one TOML document drives every CLI command.
//!
//! ```toml
//! name = "theorem2-periodic"
//!
//! [sweep]
//! theorem = "T2"
//! epsilons = [0.25, 0.125, 0.0625]
//! eta = { rule = "fixed", value = 0.5 }
//! source = { kind = "constant", value = 1.0 }
//!
//! [sweep.layout]
//! generator = { kind = "periodic" }
//! bc = { rule = "all_dirichlet" }
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{Bump, CellParams};
use crate::rates::{sharpness_bump, MuRule, RatesError, Scenario, SharpnessSetup};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}, column {column} (field `{field}`): {message}")]
    Syntax { line: usize, column: usize, field: String, message: String },
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ScenarioError {
    pub fn field(&self) -> &str {
        match self {
            ScenarioError::Syntax { field, .. } | ScenarioError::Invalid { field, .. } => field,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<Scenario>,
    #[serde(default)]
    pub sharpness: Option<SharpnessConfig>,
    #[serde(default)]
    pub cell: Option<CellConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessConfig {
    #[serde(default)]
    pub setup: SharpnessSetup,
    #[serde(default)]
    pub dirichlet: Option<DirichletRun>,
    #[serde(default)]
    pub robin: Option<RobinRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletRun {
    pub epsilons: Vec<f64>,
    /// Defaults to the smooth bump in the upper half of the box.
    #[serde(default)]
    pub bump: Option<Bump>,
    /// Allowed relative deviation of the scaled ratios from their targets.
    #[serde(default = "default_sharpness_tol")]
    pub tolerance: f64,
}

impl DirichletRun {
    pub fn bump(&self) -> Bump {
        self.bump.unwrap_or_else(|| sharpness_bump(true))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobinRun {
    pub epsilons: Vec<f64>,
    pub mu: MuRule,
    #[serde(default)]
    pub bump: Option<Bump>,
    #[serde(default = "default_sharpness_tol")]
    pub tolerance: f64,
}

impl RobinRun {
    pub fn bump(&self) -> Bump {
        self.bump.unwrap_or_else(|| sharpness_bump(false))
    }
}

fn default_sharpness_tol() -> f64 {
    0.15
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub eta: f64,
    #[serde(default)]
    pub params: CellParams,
    /// εµ values for the expansion check; two values give a remainder ratio.
    #[serde(default)]
    pub epsmu: Vec<f64>,
    /// Hole radii for the reported fit of `‖∇v0‖²` against `G_2(η)`.
    #[serde(default)]
    pub c5_etas: Vec<f64>,
}

/// Maps a byte offset to 1-based line and column.
fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Dotted key of the assignment on `line`, prefixed by the enclosing table header.
fn field_at(text: &str, line: usize) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let Some(current) = lines.get(line.saturating_sub(1)) else {
        return String::new();
    };
    let key = current.split('=').next().unwrap_or("").trim();
    let key = if key.starts_with('[') { "" } else { key };
    let table = lines[..line.saturating_sub(1).min(lines.len())]
        .iter()
        .rev()
        .map(|l| l.trim())
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    match (table, key.is_empty()) {
        (Some(t), false) => format!("{t}.{key}"),
        (Some(t), true) => t,
        (None, _) => key.to_string(),
    }
}

pub fn parse(text: &str) -> Result<ScenarioFile, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| position(text, s.start));
        ScenarioError::Syntax { line, column, field: field_at(text, line), message: e.message().to_string() }
    })?;
    validate(&file)?;
    Ok(file)
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), message: message.into() }
}

fn positive_decreasing(field: &str, list: &[f64]) -> Result<(), ScenarioError> {
    if list.is_empty() {
        return Err(invalid(field, "empty list"));
    }
    if list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(invalid(field, "entries must be positive"));
    }
    if list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid(field, "list must be strictly decreasing"));
    }
    Ok(())
}

pub fn validate(file: &ScenarioFile) -> Result<(), ScenarioError> {
    if file.sweep.is_none() && file.sharpness.is_none() && file.cell.is_none() {
        return Err(invalid("sweep", "a scenario needs at least one of [sweep], [sharpness], [cell]"));
    }
    if let Some(s) = &file.sweep {
        s.validate().map_err(|e| match e {
            RatesError::InvalidField { field, message } => invalid(&format!("sweep.{field}"), message),
            other => invalid("sweep", other.to_string()),
        })?;
    }
    if let Some(sh) = &file.sharpness {
        if !(sh.setup.eta > 0.0 && sh.setup.eta < 2.0) {
            return Err(invalid("sharpness.setup.eta", format!("η = {} must lie in (0, 2)", sh.setup.eta)));
        }
        if sh.setup.cell.n_theta < 16 || sh.setup.cell.n_theta % 8 != 0 {
            return Err(invalid("sharpness.setup.cell.n_theta", "must be a multiple of 8, at least 16"));
        }
        if let Some(d) = &sh.dirichlet {
            positive_decreasing("sharpness.dirichlet.epsilons", &d.epsilons)?;
        }
        if let Some(r) = &sh.robin {
            positive_decreasing("sharpness.robin.epsilons", &r.epsilons)?;
        }
    }
    if let Some(c) = &file.cell {
        if !(c.eta > 0.0 && c.eta < 2.0) {
            return Err(invalid("cell.eta", format!("η = {} must lie in (0, 2)", c.eta)));
        }
        if c.params.n_theta < 16 || c.params.n_theta % 8 != 0 {
            return Err(invalid("cell.params.n_theta", "must be a multiple of 8, at least 16"));
        }
        if c.epsmu.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(invalid("cell.epsmu", "entries must be positive"));
        }
        if c.c5_etas.iter().any(|e| !(*e > 0.0 && *e < 2.0)) {
            return Err(invalid("cell.c5_etas", "entries must lie in (0, 2)"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
name = "t2"

[sweep]
theorem = "T2"
epsilons = [0.25, 0.125, 0.0625]
eta = { rule = "fixed", value = 0.5 }

[sweep.layout]
generator = { kind = "periodic" }
bc = { rule = "all_dirichlet" }
"#;

    #[test]
    fn parses_minimal_sweep() {
        let f = parse(GOOD).unwrap();
        let s = f.sweep.unwrap();
        assert_eq!(s.epsilons.len(), 3);
        assert_eq!(s.eta_at(0.1), 0.5);
    }

    #[test]
    fn malformed_eta_rule_names_the_field() {
        let bad = GOOD.replace(r#"rule = "fixed", value = 0.5"#, r#"rule = "exponential", value = 0.5"#);
        let e = parse(&bad).unwrap_err();
        assert_eq!(e.field(), "sweep.eta", "{e}");
        assert!(matches!(e, ScenarioError::Syntax { line: 7, .. }), "{e}");
    }

    #[test]
    fn increasing_epsilons_are_rejected() {
        let bad = GOOD.replace("[0.25, 0.125, 0.0625]", "[0.125, 0.25]");
        assert_eq!(parse(&bad).unwrap_err().field(), "sweep.epsilons");
    }

    #[test]
    fn eta_rule_out_of_range_is_rejected() {
        let bad = GOOD.replace(r#"rule = "fixed", value = 0.5"#, r#"rule = "fixed", value = 1.5"#);
        assert_eq!(parse(&bad).unwrap_err().field(), "sweep.eta");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = GOOD.replace("theorem = \"T2\"", "theorem = \"T2\"\nthoerem = 1");
        assert!(parse(&bad).unwrap_err().field().starts_with("sweep"));
    }
}

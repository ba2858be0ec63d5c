//! JSON documents written by the CLI.
//!
//! Reports round every float to 12 significant digits so that runs diff
//! cleanly; profile files keep full precision so they can be re-certified.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::certify::Certificate;
use crate::error::Result;
use crate::game::{StochasticGame, StrategyProfile};
use crate::solver::SolveOutcome;

pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Applies [`sig12`] to every number in a JSON tree. Integers are untouched.
pub fn round_floats(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = sig12(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x)
                .map(Value::Number)
                .unwrap_or(Value::Null)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

pub fn to_pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub probs: Vec<Vec<Vec<f64>>>,
}

pub fn read_profile(game: &StochasticGame, path: &Path) -> Result<StrategyProfile> {
    let file: ProfileFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    StrategyProfile::new(game, file.probs)
}

pub fn write_profile(pi: &StrategyProfile, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&ProfileFile {
        probs: pi.probs().to_vec(),
    })?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn certificate_json(cert: &Certificate) -> Value {
    round_floats(serde_json::to_value(cert).expect("certificate serializes"))
}

pub fn solve_json(method: &str, heuristic: bool, outcome: &SolveOutcome, cert: &Certificate) -> Value {
    let mut doc = json!({
        "method": method,
        "heuristic": heuristic,
        "status": outcome.status.to_string(),
        "iterations": outcome.iterations,
        "residual": outcome.residual,
        "d": outcome.d,
        "profile": outcome.profile.probs(),
        "certificate": cert,
    });
    if let Some(simplex) = &outcome.simplex {
        doc["simplex"] = serde_json::to_value(simplex).expect("simplex serializes");
    }
    round_floats(doc)
}

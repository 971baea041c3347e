//! JSON model and policy documents.
//!
//! A model document looks like
//!
//! ```json
//! {
//!   "num_states": 2, "num_actions": 2, "horizon": 3, "initial_state": 0,
//!   "kernel": [[[0.9, 0.1], [0.2, 0.8]], [[0.5, 0.5], [0.0, 1.0]]],
//!   "components": [
//!     {"additive": [[[0, 1], [2, 0]], [[1, 1], [0, 0]]],
//!      "multiplicative": [[[1, 0.5], [0.9, 0.9]], [[0.7, 0.7], [1, 1]]],
//!      "alpha": 1.0},
//!     {"additive": ..., "multiplicative": ..., "alpha": 0.0, "bound": 2.5}
//!   ]
//! }
//! ```
//!
//! Stage arrays are either `[t][x][a][x']` or a single `[x][a][x']` array
//! applied at every stage. Floats are written in shortest round-trip form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::model::{Cmdp, CostComponent, Kernel, StageTensor};
use crate::occupancy::MarkovPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StageArray {
    PerStage(StageTensor),
    Invariant(Vec<Vec<Vec<f64>>>),
}

impl StageArray {
    fn expand(self, horizon: usize) -> StageTensor {
        match self {
            StageArray::PerStage(t) => t,
            StageArray::Invariant(stage) => vec![stage; horizon],
        }
    }

    fn compact(tensor: &StageTensor) -> Self {
        match tensor.split_first() {
            Some((first, rest)) if rest.iter().all(|s| s == first) => StageArray::Invariant(first.clone()),
            _ => StageArray::PerStage(tensor.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFile {
    pub additive: StageArray,
    pub multiplicative: StageArray,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub initial_state: usize,
    pub kernel: Kernel,
    pub components: Vec<ComponentFile>,
}

impl From<ModelFile> for Cmdp {
    fn from(file: ModelFile) -> Self {
        let horizon = file.horizon;
        Cmdp {
            num_states: file.num_states,
            num_actions: file.num_actions,
            horizon,
            initial_state: file.initial_state,
            kernel: file.kernel,
            components: file
                .components
                .into_iter()
                .map(|c| CostComponent {
                    additive: c.additive.expand(horizon),
                    multiplicative: c.multiplicative.expand(horizon),
                    alpha: c.alpha,
                    bound: c.bound,
                })
                .collect(),
        }
    }
}

impl From<&Cmdp> for ModelFile {
    fn from(cmdp: &Cmdp) -> Self {
        ModelFile {
            num_states: cmdp.num_states,
            num_actions: cmdp.num_actions,
            horizon: cmdp.horizon,
            initial_state: cmdp.initial_state,
            kernel: cmdp.kernel.clone(),
            components: cmdp
                .components
                .iter()
                .map(|c| ComponentFile {
                    additive: StageArray::compact(&c.additive),
                    multiplicative: StageArray::compact(&c.multiplicative),
                    alpha: c.alpha,
                    bound: c.bound,
                })
                .collect(),
        }
    }
}

/// Parses a model document. The result is not validated.
pub fn parse_model(text: &str) -> Result<Cmdp> {
    let file: ModelFile = serde_json::from_str(text)?;
    Ok(file.into())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Cmdp> {
    parse_model(&fs::read_to_string(path)?)
}

pub fn model_to_json(cmdp: &Cmdp) -> Result<String> {
    to_json_readable(&ModelFile::from(cmdp))
}

pub fn save_model(cmdp: &Cmdp, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(cmdp)?)?;
    Ok(())
}

/// Policy documents are `{"rules": [[[d_t(a|x) ...] ...] ...]}`.
pub fn parse_policy(text: &str) -> Result<MarkovPolicy> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<MarkovPolicy> {
    parse_policy(&fs::read_to_string(path)?)
}

pub fn policy_to_json(policy: &MarkovPolicy) -> Result<String> {
    to_json_readable(policy)
}

/// Indented JSON in which every innermost matrix stays on one line.
pub fn to_json_readable<T: Serialize>(value: &T) -> Result<String> {
    let mut out = String::new();
    write_readable(&serde_json::to_value(value)?, 0, &mut out);
    Ok(out)
}

fn nesting(value: &Value) -> usize {
    match value {
        Value::Array(items) => 1 + items.iter().map(nesting).max().unwrap_or(0),
        _ => 0,
    }
}

fn write_readable(value: &Value, indent: usize, out: &mut String) {
    let pad = |level: usize| "  ".repeat(level);
    match value {
        Value::Object(map) if !map.is_empty() => {
            out.push_str("{\n");
            for (i, (key, v)) in map.iter().enumerate() {
                out.push_str(&format!("{}{}: ", pad(indent + 1), Value::String(key.clone())));
                write_readable(v, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&format!("{}}}", pad(indent)));
        }
        Value::Array(items) if nesting(value) > 2 || items.iter().any(Value::is_object) => {
            out.push_str("[\n");
            for (i, v) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_readable(v, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&format!("{}]", pad(indent)));
        }
        _ => out.push_str(&value.to_string()),
    }
}

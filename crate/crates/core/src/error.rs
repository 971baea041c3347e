use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model is not admissible: {}", summarize(.0))]
    Invalid(Vec<Violation>),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("simplex exceeded {0} pivots without terminating")]
    CyclingLimit(usize),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("malformed document: {0}")]
    Parse(#[from] serde_json::Error),
}

fn summarize(violations: &[Violation]) -> String {
    let shown: Vec<String> = violations.iter().take(3).map(|v| v.to_string()).collect();
    let mut out = shown.join("; ");
    if violations.len() > 3 {
        out.push_str(&format!(" (+{} more)", violations.len() - 3));
    }
    out
}

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classes, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Validation,
    AssumptionViolated,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("stationary mean is degenerate (mu = {mu}): Delta undefined, use loose bound")]
    DegenerateMean { mu: f64 },

    #[error("unreachable confidence: per-step log-bound is {per_step}, bound never decreases in n")]
    UnreachableConfidence { per_step: f64 },

    #[error("f value {value} at state {state} is off the grid 1/{k}; discretize first (grid mismatch)")]
    GridMismatch { state: usize, value: f64, k: u32 },

    #[error("kernel is not irreducible; strongly connected components: {components:?}")]
    NotIrreducible { components: Vec<Vec<usize>> },

    #[error("kernel is not reversible: worst detailed-balance violation {violation:e} at pair ({i}, {j})")]
    NotReversible { i: usize, j: usize, violation: f64 },

    #[error("spectral-gap assumption violated: lambda = {lambda} >= 1")]
    AssumptionViolated { lambda: f64 },

    #[error("numerical failure in {what}: {detail}")]
    Numerical { what: &'static str, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NotIrreducible { .. }
            | Error::NotReversible { .. }
            | Error::AssumptionViolated { .. } => ErrorClass::AssumptionViolated,
            Error::Numerical { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numerical(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            what,
            detail: detail.into(),
        }
    }
}

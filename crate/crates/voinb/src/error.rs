//! Error type shared by parsing, validation, and the numeric engines.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("risk threshold must lie strictly inside (0, 1), got {0}")]
    InvalidThreshold(f64),

    #[error("{name} must lie in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("expected-NB vector contains a non-finite entry: {0:?}")]
    NonFiniteEnb([f64; 3]),

    #[error("beta parameters must be positive and finite, got ({alpha}, {beta})")]
    ImproperBeta { alpha: f64, beta: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("empty sample: no data rows")]
    EmptySample,

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("no events in sample: sensitivity is undefined")]
    NoEvents,

    #[error("no non-events in sample: specificity is undefined")]
    NoNonEvents,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("enumeration guard exceeded: {outcomes} future-data outcomes (limit {limit})")]
    EnumerationGuard { outcomes: u64, limit: u64 },

    #[error("all reweighting weights are zero; the draws cannot explain the future data")]
    AllWeightsZero,

    #[error("oracle check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for data/validation problems,
    /// 3 for numerical guards and failed oracle checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::EnumerationGuard { .. } | Error::CheckFailed(_) => 3,
            _ => 2,
        }
    }
}

use thiserror::Error;

use crate::consensus::Assumption;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("enumeration budget exceeded: {needed} > {budget} ({what})")]
    BudgetExceeded {
        what: String,
        needed: u128,
        budget: u128,
    },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("{assumption} violated: {detail}")]
    Assumption {
        assumption: Assumption,
        detail: String,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("diverged: {0}")]
    Diverged(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

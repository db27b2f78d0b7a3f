use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (dimension, sign, range).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A simulated state stopped being finite.
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    /// Every run of an ensemble hit its step budget.
    #[error("all {n_runs} runs censored after {max_steps} steps; increase max_steps or D")]
    AllCensored { n_runs: usize, max_steps: usize },

    #[error("training diverged on dataset `{dataset}`: {reason}")]
    TrainingDiverged { dataset: String, reason: String },

    #[error("reference candidate received no hits in {n_runs} runs; increase radius, T or n_runs")]
    NoReferenceHits { n_runs: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "{what}: dimension mismatch (expected {expected}, got {got})"
        )))
    }
}

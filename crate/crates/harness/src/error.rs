use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// The config did not parse or failed validation.
    #[error("config rejected: {0}")]
    Schema(String),

    #[error(transparent)]
    Core(#[from] reachlab_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Other(String),
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Schema(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

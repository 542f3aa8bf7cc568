use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("could not parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("solver failure at step {step}: {source}")]
    Solver {
        step: usize,
        #[source]
        source: collabsafe_core::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Trace { path: PathBuf, reason: String },
}

impl SimError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config { .. } | SimError::Parse(_) => 2,
            SimError::Solver { .. } => 3,
            SimError::Io { .. } | SimError::Trace { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FudaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FudaError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FudaError {
    pub fn dim(msg: impl Into<String>) -> Self {
        FudaError::Dimension(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        FudaError::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FudaError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (config files, CLI values,
    /// malformed feature files) as opposed to failures during computation.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            FudaError::Config(_) | FudaError::Parse { .. } | FudaError::Io { .. } | FudaError::Json(_)
        )
    }
}

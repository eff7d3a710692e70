//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on caller-supplied data was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numeric operation failed (singular covariance, total underflow).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An append would break per-label timestamp ordering.
    #[error("timestamp ordering violated: {0}")]
    Ordering(String),

    /// A requested record or model does not exist.
    #[error("not found: {0}")]
    NotFound(String),

    /// A text document failed to parse; carries file and line for diagnostics.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A view or model file is malformed; carries the offending path.
    #[error("malformed file {path}: {message}")]
    MalformedFile { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

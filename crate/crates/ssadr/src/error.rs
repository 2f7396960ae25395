//! Crate-wide error type and exit-code mapping.

use std::path::PathBuf;

/// Errors surfaced by any part of the training laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad configuration: invalid file contents, unknown names, dimension
    /// mismatches between declared spaces and parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated an operation's preconditions (goal outside the
    /// reachable region, stepping a finished episode, shape mismatch).
    #[error("invalid usage: {0}")]
    Usage(String),

    /// A numeric quantity left the finite range during training.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("metrics parse error at line {line}: {message}")]
    Metrics { line: usize, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error: 2 for usage/config problems,
    /// 3 for numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Checkpoint(_) | Error::Metrics { .. } => 2,
            Error::Numeric(_) => 3,
            Error::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

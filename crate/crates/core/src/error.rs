//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not conform for the requested operation.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An operation produced NaN or Inf values.
    #[error("non-finite values produced by {0}")]
    NonFinite(&'static str),

    /// Numeric failure outside the tape (divergence, degenerate input, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Dataset layout or content problem.
    #[error("data error: {0}")]
    Data(String),

    /// Filesystem error with the offending path attached.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Checkpoint is unreadable, truncated or of an unsupported version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Bad configuration file or option value.
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

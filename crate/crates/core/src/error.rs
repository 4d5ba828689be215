//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by geometry, model, training, and I/O operations.
#[derive(Debug, Error)]
pub enum NvfError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input data: unparsable mesh files, bad magic bytes,
    /// truncated dumps, checkpoint/architecture mismatches.
    #[error("format error: {0}")]
    Format(String),

    /// A precondition on operation inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Numerical failure at runtime, e.g. a non-finite training loss.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, NvfError>;

impl NvfError {
    pub fn format(msg: impl Into<String>) -> Self {
        NvfError::Format(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        NvfError::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        NvfError::Numerical(msg.into())
    }
}

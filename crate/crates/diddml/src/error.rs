//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by data loading, validation and estimation.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (bad column, non-binary
    /// treatment, empty cell, invalid config value, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A computation could not be carried out on otherwise valid input
    /// (rank-deficient design, too few clusters, infeasible DGP, ...).
    #[error("computation failed: {0}")]
    Computation(String),

    /// I/O failure while reading or writing files.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV input.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn computation(msg: impl Into<String>) -> Self {
        Error::Computation(msg.into())
    }
}

//! Crate-wide error type.

use thiserror::Error;

/// Unified error for triangle ingestion, model evaluation, sampling and reporting.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data or configuration violates a precondition.
    #[error("validation: {0}")]
    Validation(String),

    /// A numerical routine failed (non-finite density, degenerate variance, ...).
    #[error("computation: {0}")]
    Computation(String),

    /// Filesystem or serialization failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// CSV parse or write failure.
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    /// JSON parse or write failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn computation(msg: impl Into<String>) -> Self {
        Error::Computation(msg.into())
    }
}

//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    /// An input failed validation (bad label, bad range, too few samples, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    /// A non-finite value showed up where finite math was required.
    #[error("non-finite value in {context} (batch row {batch_index})")]
    Numeric { context: String, batch_index: usize },

    /// A binary file did not match its documented format.
    #[error("format error in {path} at byte {offset}: {reason}")]
    Format {
        path: String,
        offset: u64,
        reason: String,
    },

    /// Paired files disagree with each other.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// The requested partition cannot satisfy the equal-totals constraint.
    #[error("partition error: {0}")]
    Partition(String),

    /// Model aggregation received unusable inputs.
    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

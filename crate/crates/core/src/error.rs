use thiserror::Error;

use crate::inference::Diagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters handed to a constructor.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// An argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A well-formed model that cannot be evaluated at the given input.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Too few samples to support the requested summary.
    #[error("precision error: {0}")]
    Precision(String),

    #[error("diagnostics error: {0}")]
    Diagnostics(String),

    #[error("fit failed: {message}")]
    Fit {
        message: String,
        diagnostics: Option<Box<Diagnostics>>,
    },

    /// A per-seed failure inside an ensemble fit.
    #[error("ensemble member with seed {seed} failed: {source}")]
    Ensemble {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("degenerate decision boundary: {skipped} of {total} draws have no boundary")]
    DegenerateBoundary { skipped: usize, total: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

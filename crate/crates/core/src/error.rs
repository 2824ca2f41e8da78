use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the pipeline library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing embedding vector for text {0:?}")]
    MissingVector(String),

    #[error("vector index is empty")]
    EmptyIndex,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("remote request failed after {attempts} attempt(s): {message}")]
    Remote { attempts: u32, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("series {series} has length {len}, needs at least {needed}")]
    SeriesTooShort {
        series: String,
        len: usize,
        needed: usize,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("total for period {0} is missing or zero")]
    MissingTotal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that may succeed when retried (remote transport).
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Remote { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("non-numeric cell {value:?} at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("target column {0} not found")]
    MissingTarget(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("training point {0} has no out-of-bag trees")]
    NoOobTrees(usize),

    #[error("kernel matrix not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("dataset too large for exact GP: {n} > {max}")]
    TooLarge { n: usize, max: usize },

    #[error("non-positive dispersion {value} at point {index}")]
    NonPositiveDispersion { index: usize, value: f64 },

    #[error("target has zero spread")]
    ZeroVariance,

    #[error("time budget exceeded")]
    Timeout,

    #[error("config error: {0}")]
    Config(String),
}

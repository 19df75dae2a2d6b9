//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors from ingestion, training, attacks, the defence, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{row}: expected {expected} columns, found {found}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{row}: column {column}: cannot parse '{value}' as a finite number")]
    InvalidNumber {
        path: PathBuf,
        row: usize,
        column: usize,
        value: String,
    },

    #[error(
        "{path}:{row}: label column must contain exactly two distinct values, found {found:?}"
    )]
    LabelCardinality {
        path: PathBuf,
        row: usize,
        found: Vec<String>,
    },

    #[error("{path}: {reason}")]
    MalformedInput { path: PathBuf, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{0}")]
    InvalidParameter(String),

    #[error("split sizes {n_train}+{n_val} must be smaller than the dataset size {size}")]
    SplitTooLarge {
        n_train: usize,
        n_val: usize,
        size: usize,
    },

    #[error("flip budget {budget} exceeds the training set size {size}")]
    BudgetTooLarge { budget: usize, size: usize },

    #[error("exhaustive search over {combinations} flip subsets exceeds the cap of {cap}")]
    EnumerationTooLarge { combinations: u128, cap: u128 },

    #[error("k = {k} is out of range; need 1 <= k <= {max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("no source for dataset '{id}': {hint}")]
    SourceUnavailable { id: String, hint: String },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

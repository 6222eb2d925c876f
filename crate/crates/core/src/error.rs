//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("column {column:?} not found in header")]
    MissingColumn { column: String },

    #[error("column {column:?} is neither numeric nor covered by an ordinal map (row {row}, value {value:?})")]
    UnmappableColumn {
        column: String,
        row: usize,
        value: String,
    },

    #[error("no rows survived ingestion ({dropped} dropped)")]
    EmptyAfterLoad { dropped: usize },

    #[error("dataset shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset invariant violated: {0}")]
    InvalidDataset(String),

    #[error("model format error: {0}")]
    ModelFormat(String),
}

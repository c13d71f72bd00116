use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::Violation;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown attribute `{name}` (known: {known})")]
    UnknownAttribute { name: String, known: String },

    #[error("empty subgroup: {0}")]
    EmptySubgroup(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate conditional: {0}")]
    DegenerateConditional(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("mismatched runs: {0}")]
    MismatchedRuns(String),

    #[error("mismatched attributes: {0}")]
    MismatchedAttributes(String),

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("degenerate inputs: {0}")]
    DegenerateInputs(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("missing endpoint: allocation grid lacks {0}")]
    MissingEndpoint(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset failed validation ({} violation(s)): {}", .0.len(), first_violation(.0))]
    Validation(Vec<Violation>),

    #[error("size mismatch in {path}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn first_violation(v: &[Violation]) -> String {
    v.first().map(|x| x.to_string()).unwrap_or_default()
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

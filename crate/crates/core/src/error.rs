use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    /// A malformed cell or line; `row` is the 1-based data row (header excluded).
    #[error("{location}: row {row}{}: {message}", column.as_ref().map(|c| format!(", column '{c}'")).unwrap_or_default())]
    Parse {
        location: String,
        row: usize,
        column: Option<String>,
        message: String,
    },

    #[error("class {class} has {count} sample{}, need ≥ {needed}", if *count == 1 { "" } else { "s" })]
    InsufficientSamples { class: String, count: usize, needed: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid class id {class} (have {num_classes} classes)")]
    InvalidClass { class: usize, num_classes: usize },

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(String),

    #[error("perplexity bisection did not converge for row {row} (perplexity gap {gap:e})")]
    BisectionFailed { row: usize, gap: f64 },

    #[error("non-finite value during {stage} at iteration {iteration}")]
    NonFinite { stage: &'static str, iteration: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

impl Error {
    /// Whether the error stems from numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BisectionFailed { .. } | Error::NonFinite { .. } | Error::Degenerate(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

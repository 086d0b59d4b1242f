use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across corpus handling, model construction, training and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{doc}` annotates unknown aspect `{aspect}`")]
    UnknownAspect { doc: String, aspect: String },
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
    #[error("tokenizer budget {budget} cannot host {required} special and fallback entries")]
    BudgetTooSmall { budget: usize, required: usize },
    #[error("value `{value}` is missing from the {granularity} vocabulary of aspect `{aspect}`")]
    ValueMissing {
        aspect: String,
        granularity: String,
        value: String,
    },
    #[error("value `{0}` produces no tokens")]
    EmptyValue(String),
    #[error("sequence of length {len} exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
    #[error("config {origin}: {message}")]
    Config { origin: String, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("missing metrics file {0}")]
    MissingMetrics(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error comes from bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::DuplicateId(_)
                | Error::UnknownAspect { .. }
                | Error::Invalid { .. }
                | Error::BudgetTooSmall { .. }
                | Error::ValueMissing { .. }
                | Error::EmptyValue(_)
                | Error::Config { .. }
                | Error::Json(_)
        )
    }

    pub fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

use crate::cote::CorpusSummary;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error("overlapping spans {first} and {second}")]
    OverlappingSpans { first: String, second: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sequence of length {len} exceeds max length {max_len}; split it into chunks first")]
    TooLong { len: usize, max_len: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint format version mismatch: expected {expected}, found {found}")]
    FormatVersion { expected: u32, found: u32 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("endpoint: {0}")]
    Endpoint(String),

    #[error(
        "corpus generation aborted: {} of {} requests failed",
        .0.failed(),
        .0.total
    )]
    CorpusAborted(CorpusSummary),

    #[error("label scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Stable machine-readable code, used by the CLI as `code: message`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse_error",
            Error::Invalid(_) => "invalid_input",
            Error::OverlappingSpans { .. } => "overlapping_spans",
            Error::Shape(_) => "shape_mismatch",
            Error::TooLong { .. } => "sequence_too_long",
            Error::NonFinite(_) => "non_finite",
            Error::FormatVersion { .. } => "checkpoint_version",
            Error::Checkpoint(_) => "checkpoint_error",
            Error::Endpoint(_) => "endpoint_error",
            Error::CorpusAborted(_) => "corpus_aborted",
            Error::SchemeMismatch(_) => "scheme_mismatch",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
        }
    }
}

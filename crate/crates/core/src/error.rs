use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification of errors, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    External,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("empty sample id at position {0}")]
    EmptyId(usize),

    #[error("missing {what} for id(s): {}", ids.join(", "))]
    MissingIds { what: &'static str, ids: Vec<String> },

    #[error("non-finite score for id `{0}`")]
    NonFiniteScore(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("{0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training data needs both labels: {0}")]
    SingleLabel(String),

    #[error("no verdict from weighted detector `{0}`")]
    MissingVerdict(String),

    #[error("support signal {0} outside [-1, 1]")]
    SupportOutOfRange(f64),

    #[error("tokenizer mismatch: table built with {table}, classifier uses {given}")]
    TokenizerMismatch { table: String, given: String },

    #[error("no positive-weight configuration beats the all-zero predictor; try a larger weight grid")]
    NoImprovement,

    #[error("external adapter `{endpoint}`: {message}")]
    External { endpoint: String, message: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::TokenizerMismatch { .. } => ErrorKind::Config,
            Error::External { .. } => ErrorKind::External,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn external(endpoint: &str, message: impl ToString) -> Self {
        Error::External {
            endpoint: endpoint.to_string(),
            message: message.to_string(),
        }
    }
}

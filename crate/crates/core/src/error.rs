use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// A single violated constraint, addressed by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {}", join(.0))]
    Validation(Vec<Violation>),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unknown item index {0}")]
    UnknownItem(usize),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value at sample {index}: {detail}")]
    Numeric { index: usize, detail: String },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint dimensions inconsistent: {0}")]
    CheckpointDimensions(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("{agent} training aborted at step {step}: {detail}")]
    TrainingAborted {
        agent: String,
        step: u64,
        detail: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("event at {got_ms} ms precedes the previous event at {last_ms} ms")]
    Ordering { last_ms: u64, got_ms: u64 },

    #[error("out of sequence: {0}")]
    Sequencing(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation(vec![Violation::new(path, message)])
    }

    /// True for errors caused by bad input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Parameter(_)
                | Error::UnknownItem(_)
                | Error::DimensionMismatch { .. }
                | Error::IncompatibleCheckpoint(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed field `{field}`: {reason}")]
    MalformedRecord {
        line: usize,
        field: String,
        reason: String,
    },

    #[error("schema mismatch{}: expected {expected}, found {found}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    SchemaMismatch {
        line: Option<usize>,
        expected: String,
        found: String,
    },

    #[error("duplicate record id {0}")]
    DuplicateId(u64),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("dataset does not declare probability outputs")]
    NotProbabilityOutputs,

    #[error("need {needed} neighbors but only {available} candidates are available")]
    InsufficientNeighbors { needed: usize, available: usize },

    #[error("no fuser trained for expert subset {0}")]
    MissingFuser(String),

    #[error("exhaustive search supports at most {max} experts, got {found}")]
    TooManyExperts { max: usize, found: usize },

    #[error("Fano bound needs at least 3 experts, got {0}")]
    InvalidK(usize),

    #[error("serialization failure: {0}")]
    Serialization(String),
}

impl Error {
    /// Stable identifier used by the command line for machine-readable failures.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedRecord { .. } => "MalformedRecord",
            Error::SchemaMismatch { .. } => "SchemaMismatch",
            Error::DuplicateId(_) => "DuplicateId",
            Error::Io { .. } => "IoFailure",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyDataset => "EmptyDataset",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::NotProbabilityOutputs => "NotProbabilityOutputs",
            Error::InsufficientNeighbors { .. } => "InsufficientNeighbors",
            Error::MissingFuser(_) => "MissingFuser",
            Error::TooManyExperts { .. } => "TooManyExperts",
            Error::InvalidK(_) => "InvalidK",
            Error::Serialization(_) => "Serialization",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(line: usize, field: &str, reason: impl Into<String>) -> Self {
        Error::MalformedRecord {
            line,
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

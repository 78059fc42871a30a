//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classification used by callers to pick process exit codes:
/// user/config mistakes vs. internal or numerical failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    User,
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("ingest error in {path} line {line}: {reason}")]
    Ingest {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("duplicate grid timestamp {timestamp} in {path}")]
    DuplicateTimestamp { path: PathBuf, timestamp: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("conflicting values at {timestamp}: {left} vs {right}")]
    Conflict {
        timestamp: String,
        left: f64,
        right: f64,
    },

    #[error("gap error: {0}")]
    Gap(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("incomplete day {0}: mask hole in net load")]
    IncompleteDay(chrono::NaiveDate),

    #[error("empty label set: {0}")]
    EmptyLabelSet(String),

    #[error("sample for {date} skipped: {reason}")]
    SkipSample {
        date: chrono::NaiveDate,
        reason: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("partition mismatch: {0}")]
    PartitionMismatch(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// Exit-code classification: config/data mistakes are user errors,
    /// everything else (numerics, I/O mid-run) is internal.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Ingest { .. }
            | Error::DuplicateTimestamp { .. }
            | Error::EmptyInput(_)
            | Error::Config(_)
            | Error::Validation(_)
            | Error::Conflict { .. }
            | Error::Gap(_)
            | Error::Argument(_)
            | Error::IncompleteDay(_)
            | Error::EmptyLabelSet(_)
            | Error::SkipSample { .. }
            | Error::PartitionMismatch(_)
            | Error::Checkpoint(_) => ErrorClass::User,
            Error::Shape(_) | Error::Numerical(_) | Error::Io { .. } | Error::Csv { .. } => {
                ErrorClass::Internal
            }
        }
    }
}

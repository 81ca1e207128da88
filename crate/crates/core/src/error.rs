use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between reading bytes and emitting a report.
///
/// Variants are grouped so a driver can map them onto process exit codes
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("data error at record {record}: {message}")]
    Record { record: u64, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("numerically degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// 2 usage, 3 format, 4 data, 5 numeric degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io(_) | Error::Format(_) | Error::Truncated(_) | Error::Json(_) | Error::Csv(_) => 3,
            Error::Record { .. } | Error::Data(_) | Error::Corrupt(_) | Error::DimMismatch { .. } | Error::Empty(_) => {
                4
            }
            Error::Degenerate(_) => 5,
        }
    }

    /// Short machine-readable tag for structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Format(_) => "format",
            Error::Truncated(_) => "truncated",
            Error::Record { .. } | Error::Data(_) => "data",
            Error::Corrupt(_) => "corrupt",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::Empty(_) => "empty",
            Error::Degenerate(_) => "degenerate",
            Error::Usage(_) => "usage",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

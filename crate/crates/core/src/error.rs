use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("insufficient history: need at least {required} valid bars, have {available}")]
    InsufficientHistory { required: usize, available: usize },

    #[error("degenerate bar range: high equals low ({0})")]
    DegenerateRange(f64),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("degenerate feature column `{column}`: zero spread on the training slice")]
    DegenerateFeature { column: String },

    #[error("class error: {0}")]
    Class(String),

    #[error("degenerate box: every membership-scaled bound is below machine epsilon")]
    DegenerateBox,

    #[error("degenerate denominator: all targets are zero")]
    DegenerateDenominator,

    #[error("unknown {kind} `{name}`; registered: {known}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Usage and IO failures map to exit status 2, everything else to 1.
    pub fn is_usage_or_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Config(_) | Error::UnknownStrategy { .. }
        )
    }
}

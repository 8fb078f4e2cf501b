use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("kernel evaluated to a non-finite value at t={t}, s={s}")]
    KernelEvaluation { t: f64, s: f64 },

    /// Column `i` of the operator is identically zero, so coordinate `i`
    /// cannot be identified from data and must be dropped by the caller.
    #[error("column {0} of the operator is zero")]
    DegenerateColumn(usize),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("observation vector is identically zero")]
    TrivialData,

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("invalid solver state: {0}")]
    State(String),

    #[error("L-curve needs at least 3 points, got {0}")]
    InsufficientHistory(usize),

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("malformed input {path:?}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            got,
        }
    }

    /// True for errors caused by arithmetic rather than by inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalBreakdown(_) | Error::KernelEvaluation { .. } | Error::DegenerateColumn(_)
        )
    }

    /// Process exit status for the command-line tool: 1 usage, 2 input or
    /// I/O, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::State(_) | Error::InsufficientHistory(_) => 1,
            Error::NumericalBreakdown(_) => 3,
            _ => 2,
        }
    }
}

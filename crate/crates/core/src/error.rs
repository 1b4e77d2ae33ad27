use std::path::PathBuf;

use thiserror::Error;

use crate::geom::FrameId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("trajectory is in frame {found:?}, expected {expected:?}")]
    FrameMismatch { expected: FrameId, found: FrameId },

    #[error("time {t} outside scene range [{min}, {max}]")]
    TimeOutOfRange { t: f64, min: f64, max: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("timestamp sets differ: {0}")]
    TimestampMismatch(String),

    #[error("no safe lateral offset found for frame {frame}")]
    Infeasible { frame: usize },

    #[error("loss became non-finite at step {step}")]
    Divergence { step: usize },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible { .. } => 3,
            Error::Divergence { .. } => 4,
            Error::Io { .. } => 1,
            _ => 2,
        }
    }
}

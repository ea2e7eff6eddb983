use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {index}: {reason}")]
    InvalidPoint { index: usize, reason: String },

    #[error("operation requires a nonempty point cloud")]
    EmptyCloud,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("point {index} lies on the sensor axis (x = y = 0)")]
    OriginPoint { index: usize },

    #[error("feature width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("sparse grid is empty")]
    EmptyGrid,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no consensus: best hypothesis has {best} inliers, {required} required")]
    NoConsensus { best: usize, required: usize },

    #[error("scan is empty")]
    EmptyScan,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Machine-parsable code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::InvalidPoint { .. } => "E_PARSE",
            Error::DegenerateInput(_) | Error::OriginPoint { .. } => "E_DEGENERATE",
            Error::NoConsensus { .. } => "E_NOCONSENSUS",
            Error::EmptyCloud | Error::EmptyGrid | Error::EmptyScan => "E_EMPTY",
            Error::Io { .. } => "E_IO",
            Error::WidthMismatch { .. } | Error::ShapeMismatch(_) | Error::LengthMismatch { .. } => {
                "E_SHAPE"
            }
            Error::InvalidConfig(_) => "E_CONFIG",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

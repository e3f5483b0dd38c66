use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the stroke pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polynomial order {0}")]
    InvalidOrder(usize),

    #[error("invalid sample count {0}: at least 2 samples are required")]
    InvalidSampling(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid direction ({0}, {1}): must be non-zero")]
    InvalidDirection(f64, f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("character {0:?} not found in database")]
    NotFound(char),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("path syntax error: {0}")]
    PathSyntax(String),

    #[error("unsupported path command '{0}'")]
    UnsupportedCommand(char),

    #[error("stroke index {index} out of range (stroke count {count})")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("degenerate skeleton: zero arc length")]
    DegenerateSkeleton,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the homing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate label: position {x:.6},{y:.6} coincides with the nest")]
    DegenerateLabel { x: f64, y: f64 },

    #[error("undefined direction: {0}")]
    UndefinedDirection(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rendering failed at location {index} ({x:.3}, {y:.3}): {reason}")]
    Render {
        index: usize,
        x: f64,
        y: f64,
        reason: String,
    },

    #[error("non-finite loss at training step {step}")]
    NonFiniteLoss { step: usize },

    #[error("model format: {0}")]
    Format(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
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
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate view: {0}")]
    DegenerateView(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("invalid extent: {0}")]
    InvalidExtent(String),
    #[error("index ({row}, {col}) out of range for {rows}x{cols} lattice")]
    Index {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("singular warp: |det| = {0:e}")]
    SingularWarp(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask selects no cells")]
    EmptyMask,
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error("trajectory too short: need {needed} steps, have {available}")]
    TrajectoryTooShort { needed: usize, available: usize },
    #[error("unknown class `{0}` in group")]
    UnknownClass(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed data in {context}: {message}")]
    Format { context: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(context: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Format {
            context: context.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

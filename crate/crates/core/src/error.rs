use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the annotation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point ({x}, {y}) lies outside the {width}x{height} frame")]
    PointOutsideFrame {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("rectangle does not intersect the frame")]
    RectOutsideFrame,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unknown sequence key {0}")]
    UnknownSequence(String),

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("mask provider failed: {0}")]
    MaskProvider(String),

    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("i/o error for {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

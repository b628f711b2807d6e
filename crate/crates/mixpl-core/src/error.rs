//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box geometry: {0}")]
    Geometry(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed annotation document {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("dataset validation failed: {0}")]
    Validation(String),

    #[error("split fraction {0} outside (0, 1]")]
    SplitFraction(f64),

    #[error("pad target {target_w}x{target_h} smaller than raster {width}x{height}")]
    PadTarget {
        width: u32,
        height: u32,
        target_w: u32,
        target_h: u32,
    },

    #[error("raster dump is not in the expected format: {0}")]
    RasterFormat(String),

    #[error("image codec error: {0}")]
    Codec(String),

    #[error("augmentation error: {0}")]
    Augment(String),

    #[error("batch composition error: {0}")]
    Compose(String),

    #[error("resampling error: {0}")]
    Resample(String),

    #[error("score calibration failed: {0}")]
    Calibration(String),

    #[error("parameter vectors have different lengths: {teacher} vs {student}")]
    ParamLength { teacher: usize, student: usize },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

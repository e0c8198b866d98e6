use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} at index {index} is outside [0, 1] or not finite")]
    ValueRange { index: usize, value: f64 },

    #[error("invalid pixel data: {0}")]
    InvalidData(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("singular illuminant at pixel ({x}, {y}): channel {channel} = {value:e} is below the floor")]
    SingularIlluminant { x: usize, y: usize, channel: usize, value: f64 },

    #[error("no valid samples: {0}")]
    EmptyDomain(String),

    #[error("illuminant direction undefined for a zero vector")]
    UndefinedDirection,

    #[error("only {candidates} gray candidates for {clusters} clusters; try a smaller cluster count")]
    DegenerateClustering { candidates: usize, clusters: usize },

    #[error("region {label} has {available} pixels but {requested} seeds were requested")]
    InsufficientRegion { label: usize, available: usize, requested: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape { expected: expected.to_string(), actual: actual.to_string() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}

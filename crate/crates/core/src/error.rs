use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("annotation format error in {path}: {reason}")]
    AnnotationFormat { path: PathBuf, reason: String },

    #[error("landmark provider initialization failed: {0}")]
    ProviderInit(String),

    #[error("no landmark entry matches the requested face box in {path}")]
    NoMatchingFace { path: PathBuf },

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mask has no set cells")]
    EmptyMask,

    #[error("no face found and the no-face policy is `error`")]
    NoFace,

    #[error("dataset layout error: {0}")]
    Layout(String),

    #[error("dataset is empty under {0}")]
    EmptyDataset(PathBuf),

    #[error("invalid split ratios: {0}")]
    Ratio(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("failed to load model weights: {0}")]
    WeightLoad(String),

    #[error("unknown label `{0}`")]
    Label(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training produced a non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("model does not expose the taps required for this operation: {0}")]
    Capability(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
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

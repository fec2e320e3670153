use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {detail}")]
    Shape { context: String, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label out of vocabulary: {0}")]
    Vocabulary(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("association enumeration needs {needed} hypotheses, cap is {cap}; reduce detections per keyframe or landmark count")]
    EnumerationCap { needed: u128, cap: usize },

    #[error("loss closure is not deterministic: {first} != {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("normal equations stayed singular after damping (lambda = {lambda:e})")]
    Singular { lambda: f64 },

    #[error("malformed file at byte offset {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}

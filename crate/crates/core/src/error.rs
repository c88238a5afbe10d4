use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("embedding has zero norm")]
    ZeroNorm,

    #[error("embedding contains a non-finite value")]
    NonFinite,

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("label index {0} out of range")]
    LabelOutOfRange(usize),

    #[error("backward called before any forward pass was recorded")]
    BackwardBeforeForward,

    #[error("invalid value for `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("unknown ablation mode `{0}`")]
    UnknownMode(String),

    #[error("both classes must be present")]
    SingleClass,

    #[error("no eligible posts in {0}")]
    NoEligiblePosts(&'static str),

    #[error("checkpoint incompatible: {0}")]
    IncompatibleCheckpoint(String),

    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error("synthetic spec cannot produce both classes: {0}")]
    DegenerateSynthetic(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("incompatible layers {index} ({from}) -> {next} ({to}): {reason}")]
    IncompatibleLayers {
        index: usize,
        from: String,
        next: usize,
        to: String,
        reason: String,
    },

    #[error("network has no head for task {0}")]
    MissingHead(usize),

    #[error("stale or foreign batch cache: {0}")]
    StaleCache(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("IDX format error at byte {offset}: {message}")]
    IdxFormat { offset: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("task {0} has never been trained by any zoo member")]
    UntrainedTask(usize),

    #[error("ensemble has no members")]
    EmptyEnsemble,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

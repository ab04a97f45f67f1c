use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("degenerate filterbank: mel filter {filter} has no positive weight")]
    DegenerateFilterbank { filter: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("unsupported audio format in {path:?}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("corrupt audio file {path:?}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("degenerate scores: both classes are required")]
    DegenerateScores,
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}

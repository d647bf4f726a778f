use std::path::PathBuf;

use thiserror::Error;

/// Errors shared across the workspace.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("length error: expected {expected} bytes of payload, found {found}")]
    Length { expected: usize, found: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("ingestion error for {what} at {}: {reason}", path.display())]
    Ingestion {
        what: String,
        path: PathBuf,
        reason: String,
    },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

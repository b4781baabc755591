use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input that violates an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A geometric operation produced an empty result.
    #[error("empty geometry: {0}")]
    EmptyGeometry(String),

    /// Contradictory or missing configuration fields.
    #[error("configuration error: {0}")]
    Config(String),

    /// The candidate pool contains no testable subsets.
    #[error("no testable candidate subsets")]
    NoCandidates,

    /// Hotspot construction could not meet the association tolerance.
    #[error("hotspot rejected: {0}")]
    HotspotRejected(String),

    /// A pipeline stage needs an artifact that has not been produced yet.
    #[error("missing stage artifact: {0}")]
    MissingStage(String),

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: msg.into(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A bundled or user-supplied resource table could not be parsed.
    #[error("resource {origin}, line {line}: {msg}")]
    Resource {
        origin: String,
        line: usize,
        msg: String,
    },

    /// A dataset row failed validation.
    #[error("{origin}, line {line}: {msg}")]
    Malformed {
        origin: String,
        line: usize,
        msg: String,
    },

    /// A CoNLL-U sentence block failed validation. `index` is 0-based.
    #[error("sentence {index}: {msg}")]
    Parse { index: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("misaligned inputs: {0}")]
    Alignment(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

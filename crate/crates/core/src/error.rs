use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("dataset at {root} contains no decodable images")]
    EmptyDataset { root: PathBuf },

    #[error("failed to ingest {path}: {reason}")]
    Ingest { path: PathBuf, reason: String },

    #[error("training diverged at step {step}: non-finite {term}")]
    Divergence { term: String, step: u64 },

    #[error("state error: {0}")]
    State(String),

    #[error("incompatible checkpoint: {0}")]
    Version(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("config error at line {line} (key `{key}`): {message}")]
    Config {
        key: String,
        line: usize,
        message: String,
    },

    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("I/O error on {path}: {source}")]
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
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

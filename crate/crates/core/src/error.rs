use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Record { line: u64, message: String },

    #[error("writing document {index}: {source}")]
    Write {
        index: usize,
        #[source]
        source: std::io::Error,
    },

    #[error("unscorable document: {0}")]
    Unscorable(&'static str),

    #[error("tokenizer: {0}")]
    Tokenizer(String),

    #[error("model: {0}")]
    Model(String),

    #[error("training data: {0}")]
    Training(String),

    #[error("missing annotation `{0}`")]
    MissingAnnotation(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Data(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Configuration problems are reported with exit code 1, everything else
    /// is a data error (exit code 2).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigErrors;
use crate::parsers::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration:\n{0}")]
    Config(#[from] ConfigErrors),

    #[error("unknown dataset id `{id}` (available: {})", available.join(", "))]
    UnknownDataset { id: String, available: Vec<String> },

    #[error("unknown parser `{0}`")]
    UnknownParser(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parquet: {source}")]
    Parquet {
        path: PathBuf,
        #[source]
        source: parquet::errors::ParquetError,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("download failed: {0}")]
    Network(String),

    #[error("archive extraction failed for {path}: {message}")]
    Archive { path: PathBuf, message: String },

    #[error("parser `{parser}`: {message}")]
    Parse { parser: String, message: String },

    #[error("standardized output failed validation:\n{0}")]
    Validation(ValidationReport),

    #[error("{0}")]
    Invariant(String),

    #[error("session {session_id}: {source}")]
    Session {
        session_id: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Split(String),

    #[error("{0}")]
    Transform(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(parser: &str, message: impl Into<String>) -> Self {
        Error::Parse {
            parser: parser.to_string(),
            message: message.into(),
        }
    }

    /// True for errors caused by the configuration itself rather than by data or I/O.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnknownDataset { .. } | Error::UnknownParser(_)
        )
    }

    pub fn is_network(&self) -> bool {
        matches!(self, Error::Network(_))
    }

    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) => true,
            Error::Session { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

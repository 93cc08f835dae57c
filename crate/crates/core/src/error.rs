use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("invalid record {record_id}: {message}")]
    InvalidRecord { record_id: String, message: String },

    #[error("unknown record id `{0}`")]
    UnknownRecord(String),

    #[error("unknown lead `{0}`")]
    UnknownLead(String),

    #[error("shape mismatch in {op}: {message}")]
    Shape { op: &'static str, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("{0}")]
    OutOfScope(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, message: impl Into<String>) -> Self {
        Error::Shape {
            op,
            message: message.into(),
        }
    }
}

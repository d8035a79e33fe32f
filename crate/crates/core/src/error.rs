use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, malformed or out of range.
    #[error("configuration error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training error at step {step}: {msg}")]
    Training { step: u64, msg: String },

    #[error("enumeration of {states} states exceeds the cap of {cap}")]
    EnumerationCap { states: u128, cap: u64 },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-provided configuration rather than
    /// by the run itself.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::EnumerationCap { .. })
    }
}

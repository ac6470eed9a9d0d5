use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty batch")]
    EmptyBatch,

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("empty reference sentence")]
    EmptyReference,

    #[error("target length {len} exceeds max_len {max_len}")]
    TargetTooLong { len: usize, max_len: usize },

    #[error("enumeration guard exceeded: {size} > {limit}")]
    EnumerationGuard { size: f64, limit: f64 },

    #[error("cost kind {0} is not a {1}-level cost")]
    WrongCostLevel(&'static str, &'static str),

    #[error("GLEU requires source sentences")]
    MissingSources,

    #[error("invalid transduction rule id {0}")]
    InvalidRule(u32),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by user-supplied configuration rather than the environment.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidRule(_) | Error::EnumerationGuard { .. }
        )
    }
}

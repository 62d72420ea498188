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

    #[error("template error: {0}")]
    Template(String),

    #[error("relation {relation} has no question template")]
    MissingTemplate { relation: String },

    #[error("fact {uuid} has no oracle evidence")]
    MissingEvidence { uuid: String },

    #[error("no adversarial donor for fact {uuid} (relation {relation})")]
    NoDonor { uuid: String, relation: String },

    #[error("index build failed: {0}")]
    Build(String),

    #[error("index format error: {0}")]
    Format(String),

    #[error("query too long: {len} tokens with specials exceeds {max}")]
    QueryTooLong { len: usize, max: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("transport error (retryable): {0}")]
    Transport(String),

    #[error("protocol violation: {message} (payload: {excerpt})")]
    Protocol { message: String, excerpt: String },

    #[error("missing corpora for weighted average: {0:?}")]
    MissingCorpus(Vec<String>),

    #[error("record {uuid} has no paired baseline")]
    Unpaired { uuid: String },

    #[error("config validation failed: {0}")]
    Validation(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Transport failures are the only retryable class.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}

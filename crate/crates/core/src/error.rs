use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("mask has no foreground pixels")]
    EmptyForeground,

    #[error("mask has {available} foreground pixels, {requested} requested")]
    InsufficientForeground { requested: usize, available: usize },

    #[error("generation failed: {0}")]
    GenerationFailed(String),

    /// The uncertainty region is empty so no refined prompt can be derived.
    #[error("uncertainty map has no region to refine")]
    EmptyUncertainty,

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("segmenter failed on box {index}: {source}")]
    BoxFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("pipeline aborted after {} round(s): {source}", trace.rounds.len())]
    Aborted {
        #[source]
        source: Box<Error>,
        trace: Box<crate::refine::RefineTrace>,
    },

    /// More than the tolerated share of benchmark rows failed.
    #[error("{failed} of {total} evaluations failed (first: {first})")]
    RunFailed { failed: usize, total: usize, first: String },

    #[error("entry {id}: {message}")]
    Dataset { id: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Codec(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in a segmentation backend.
    pub fn is_backend(&self) -> bool {
        match self {
            Error::Transport(_) | Error::Protocol(_) | Error::Backend(_) => true,
            Error::BoxFailed { source, .. } | Error::Aborted { source, .. } => source.is_backend(),
            _ => false,
        }
    }

    /// True for file-system or codec failures.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Codec(_) | Error::Dataset { .. } => true,
            Error::Aborted { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

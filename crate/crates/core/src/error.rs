use std::path::PathBuf;

use thiserror::Error;

use crate::scorehead::Checkpoint;

pub type Result<T, E = ArenaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ArenaError {
    /// A record or request failed a domain invariant. `field` names the
    /// offending field or dimension.
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("unknown {kind}: {}", ids.join(", "))]
    UnknownIds { kind: &'static str, ids: Vec<String> },

    #[error("duplicate {kind} '{id}'")]
    Duplicate { kind: &'static str, id: String },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("requested {requested} battle pairs but at most {max} distinct pairs are available")]
    Capacity { requested: usize, max: usize },

    #[error("no pairs remaining in session '{0}'")]
    Exhausted(String),

    #[error("denied: {0}")]
    Denied(String),

    #[error("training diverged at step {step} (loss {loss}); last finite parameters kept")]
    Diverged {
        step: usize,
        loss: f64,
        checkpoint: Box<Checkpoint>,
    },

    #[error("state mismatch: {0}")]
    Mismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ArenaError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ArenaError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        ArenaError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ArenaError::Io {
            path: path.into(),
            source,
        }
    }

    /// Field name for structured error responses, when one applies.
    pub fn field(&self) -> Option<&str> {
        match self {
            ArenaError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

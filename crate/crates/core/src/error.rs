use thiserror::Error;

/// Errors surfaced by the arena, its learners and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown host id {0}")]
    UnknownHost(usize),

    #[error("unknown link id {0}")]
    UnknownLink(usize),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("lookup on an empty episodic dictionary")]
    EmptyDictionary,

    #[error("training diverged: {0}")]
    Training(String),

    #[error("invalid input: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            kind => Error::Parse {
                line,
                message: format!("{kind:?}"),
            },
        }
    }
}

use thiserror::Error;

/// Errors produced by parsing, validation and model training.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input at a specific line of a JSONL file.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Structurally well-formed input that violates an invariant.
    #[error("{0}")]
    Validation(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A serialized model was produced by an incompatible schema.
    #[error("bundle schema version {found} is not supported (this build reads version {expected})")]
    SchemaVersion { found: u64, expected: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

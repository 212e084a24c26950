use thiserror::Error;

/// Errors raised by the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a precondition. `key` names the offending field.
    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    /// An operation was called outside its domain (negative time, λ ∉ Λ, empty list, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("grid mismatch: functions live on different grids")]
    GridMismatch,

    /// The family has no dominating operator C(t) (uncertain-shift regime).
    #[error("no envelope bound available (uncertain-shift regime); use `counterexample`")]
    NoEnvelopeBound,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

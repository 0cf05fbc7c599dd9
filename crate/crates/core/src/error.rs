use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or model parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// An economic primitive was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("objective is not finite at the starting point")]
    Initialization,

    #[error("cannot allocate over an empty society")]
    EmptySociety,

    #[error("invalid state: {0}")]
    State(String),

    #[error("statistic undefined: {0}")]
    UndefinedStatistic(String),

    #[error("configuration error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter { name, reason: reason.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Usage(_) => 1,
            Error::Invariant(_) => 3,
            _ => 2,
        }
    }
}

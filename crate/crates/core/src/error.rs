use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or hyperparameters that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad input from a caller: wrong preset name, too few samples, index out of range.
    #[error("usage error: {0}")]
    Usage(String),

    /// A config file that failed to parse or validate.
    #[error("{path}:{line}: `{key}`: {message}")]
    ConfigFile {
        path: String,
        line: usize,
        key: String,
        message: String,
    },

    /// NaN/Inf showed up somewhere it must not.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Broken internal contract, e.g. a cache that does not belong to the params.
    #[error("internal error: {0}")]
    Internal(String),

    /// Input files that parse but cannot be used, e.g. an empty metrics log.
    #[error("{0}")]
    Data(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for errors caused by the caller's input rather than by a failed run.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Usage(_) | Error::Config(_) | Error::ConfigFile { .. }
        )
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error categories map 1:1 onto the CLI exit-code contract:
/// `Config`/`Input` exit 2, `Io`/`Format` exit 3, `Numerical` exit 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or inconsistent model wiring.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid runtime input (label out of range, empty sequence, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Non-finite values encountered while training.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed dataset or checkpoint file; `offset` is the byte at which
    /// decoding failed.
    #[error("format error in {path} at byte {offset}: {msg}")]
    Format {
        path: PathBuf,
        offset: u64,
        msg: String,
    },

    /// Violated internal invariant (stale trace, mismatched cache).
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable exit code for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::Numerical(_) => 4,
            Error::Internal(_) => 1,
        }
    }
}

//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the suss-core modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Filesystem failure with the path that triggered it.
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file was readable but its contents could not be decoded.
    #[error("decode error: {0}")]
    Decode(String),

    /// Operand shapes or resolutions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// A computation produced non-finite values or diverged.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable category, used by the CLI for exit codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Decode(_) => "decode",
            Error::Shape(_) => "shape",
            Error::Invalid(_) => "invalid",
            Error::Numeric(_) => "numeric",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

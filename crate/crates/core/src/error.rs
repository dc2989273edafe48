use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every layer of the crate.
///
/// The variants map one-to-one onto the CLI's error classes so the binary
/// can pick an exit code without inspecting messages.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid polynomial parameters, widths, or config keys.
    #[error("{0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("{0}")]
    Data(String),

    /// Text-format parse failure with location.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Shape or arity mismatch between graph operands.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr:e}): {loss}")]
    Numeric {
        epoch: usize,
        batch: usize,
        lr: f64,
        loss: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable class name.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) | Error::Parse { .. } | Error::Io { .. } => "data",
            Error::Contract(_) => "contract",
            Error::Numeric { .. } => "numeric",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! contract {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)*)));
        }
    };
}
pub(crate) use contract;

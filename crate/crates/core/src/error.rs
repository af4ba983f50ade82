use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero-norm vector: {0}")]
    ZeroNorm(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    /// A line-oriented text format failed to parse.
    #[error("{source_name}: line {line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    /// A binary format failed to decode.
    #[error("malformed {format}: {msg}")]
    Format { format: &'static str, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at step {step} (epoch {epoch}): loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("stale forward cache: parameters changed since the forward pass")]
    StaleCache,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    pub(crate) fn format(format: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            format,
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad user configuration rather than by data or runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

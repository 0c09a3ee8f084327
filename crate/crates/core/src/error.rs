//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition (non-finite value,
    /// dimension mismatch, out-of-domain constant).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An object was used in a state its contract forbids (empty draw set,
    /// unnormalized direction, inconsistent latent labels).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A numerical routine could not complete (non-SPD posterior precision,
    /// slice-shrinkage retry cap, eigen failure). The message carries the
    /// diagnostic: condition numbers, retry counts, offending values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A sub-update failed mid-run; `iteration` is the 1-based sweep index.
    #[error("sampler aborted at iteration {iteration}: {source}")]
    Sampler {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// Malformed text input (draw files, CSV data); 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn invalid_state(msg: impl Into<String>) -> Self {
        Error::InvalidState(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn at_iteration(self, iteration: usize) -> Self {
        Error::Sampler {
            iteration,
            source: Box::new(self),
        }
    }
}

//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, simulation, and solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or function argument was out of range.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A payoff was evaluated on a price vector of the wrong length.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A config file could not be parsed; `line` is 1-based.
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    /// A non-finite value appeared during iteration. The location
    /// identifies the first offending sample.
    #[error("non-finite value at path {path}, step {step}, iteration {iteration}")]
    NonFinite {
        path: usize,
        step: usize,
        iteration: usize,
    },

    /// A numerical routine failed (singular system, divergent solve, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// I/O failure while reading config or writing outputs.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Model validation found hard violations. Each string names the field
    /// and the assumption it breaks.
    #[error("model validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    /// A precondition of a direct call was violated (bad argument,
    /// unsupported combination of model and method).
    #[error("{0}")]
    Parameter(String),

    /// Payoff evaluated outside its domain.
    #[error("payoff domain violation: {payoff} is not defined at x = {x}")]
    PayoffDomain { payoff: String, x: f64 },

    /// A numerical routine failed (divergence, positivity loss,
    /// non-convergence). The message carries the diagnostic.
    #[error("numerical failure in {context}: {message}")]
    Numerical { context: String, message: String },

    /// Configuration file problem; `path` is the dotted JSON path of the
    /// offending key.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn numerical(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

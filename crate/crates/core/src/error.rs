//! Error type shared by all modules.
//!
//! Every fallible operation returns [`Result`]; domain violations are
//! reported as errors, never as panics.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The first hitting time of 0 is almost surely infinite, so no sample
    /// can be produced (squared Bessel processes of dimension >= 2 never
    /// reach 0).
    #[error("no finite hitting time: dimension {nu} >= 2")]
    NoFiniteHittingTime { nu: f64 },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

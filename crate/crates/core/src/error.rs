use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes surfaced by the toolkit. The CLI maps each class to a
/// distinct exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or malformed scenario / controller configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Gain synthesis or stability verification failed.
    #[error("synthesis error: {0}")]
    Synthesis(String),

    /// The integrator produced a non-physical or non-finite state.
    #[error("simulation fault at t = {t:.6} s: {reason}")]
    SimulationFault { t: f64, reason: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

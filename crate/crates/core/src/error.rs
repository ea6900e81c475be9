use thiserror::Error;

/// Errors raised by the simulation library.
///
/// Every variant that comes from bad input names the offending parameter so
/// front ends can report it verbatim.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("connection function: {0}")]
    InvalidConnectionFunction(String),

    #[error("memory bound exceeded: {requested} vertices requested, limit is {limit}")]
    MemoryBound { requested: usize, limit: usize },

    #[error("criterion is not monotone in intensity: {0}")]
    NonMonotone(String),

    #[error("window does not contain the required region: {0}")]
    WindowTooSmall(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Checks that `value` is finite and strictly positive.
pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(invalid(name, format!("must be finite and > 0, got {value}")));
    }
    Ok(())
}

/// Checks that `value` is finite and nonnegative.
pub(crate) fn require_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(invalid(name, format!("must be finite and >= 0, got {value}")));
    }
    Ok(())
}

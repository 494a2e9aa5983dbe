use thiserror::Error;

/// Error taxonomy shared by every module in the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Input outside the mathematical domain of the operation.
    #[error("domain error in {context}: {message}")]
    Domain { context: &'static str, message: String },

    /// Result not representable (overflow, argument beyond supported range).
    #[error("range error in {context}: {message}")]
    Range { context: &'static str, message: String },

    /// A quadrature or iteration failed to meet its tolerance.
    /// Carries the best estimate achieved so callers can decide to degrade.
    #[error("convergence failure in {context}: requested {requested:.3e}, achieved {achieved:.3e}")]
    Convergence {
        context: &'static str,
        requested: f64,
        achieved: f64,
        estimate: f64,
    },

    /// A calibration search exhausted its budget.
    #[error("calibration failure in {context}: {message}")]
    Calibration { context: &'static str, message: String },

    /// Structurally invalid call (mismatched lengths, empty input, bad flag).
    #[error("usage error in {context}: {message}")]
    Usage { context: &'static str, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(context: &'static str, message: impl Into<String>) -> Self {
        Error::Domain { context, message: message.into() }
    }

    pub fn range(context: &'static str, message: impl Into<String>) -> Self {
        Error::Range { context, message: message.into() }
    }

    pub fn usage(context: &'static str, message: impl Into<String>) -> Self {
        Error::Usage { context, message: message.into() }
    }

    pub fn calibration(context: &'static str, message: impl Into<String>) -> Self {
        Error::Calibration { context, message: message.into() }
    }
}

/// Checks that a value is finite, returning a domain error otherwise.
pub fn require_finite(context: &'static str, name: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::domain(context, format!("{name} = {value} is not finite")))
    }
}

/// Checks that a value is finite and strictly positive.
pub fn require_positive(context: &'static str, name: &str, value: f64) -> Result<f64> {
    require_finite(context, name, value)?;
    if value > 0.0 {
        Ok(value)
    } else {
        Err(Error::domain(context, format!("{name} = {value} must be > 0")))
    }
}

use thiserror::Error;

/// Errors raised when a model parameter violates its domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("degenerate angular gain: |cos(theta)| = {cos_theta:e} at theta = {theta}")]
    DegenerateGain { theta: f64, cos_theta: f64 },

    #[error("Kalman filter diverged: {0}")]
    Divergence(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// Name of the offending field, when the error is a validation failure.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            Error::InvalidParameter { field, .. } => Some(field),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

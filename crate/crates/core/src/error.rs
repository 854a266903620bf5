use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or config field failed validation.
    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// No side peak stands out of the spectral noise floor.
    #[error("fringes unresolved: side peak {peak:.3e} below floor {floor:.3e}")]
    FringesUnresolved { peak: f64, floor: f64 },

    /// The normal matrix of the (k_omega, phi_a) problem is singular.
    #[error("unidentifiable: {0}")]
    Unidentifiable(String),

    /// Phase unwrapping needs a tighter coarse acceleration.
    #[error(
        "acceleration ambiguity: coarse sigma {coarse_sigma:.3e} m/s^2 exceeds bound {required:.3e} m/s^2"
    )]
    Ambiguous { coarse_sigma: f64, required: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Rejects non-finite or non-positive values with a diagnostic naming `field`.
pub(crate) fn ensure_positive(field: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::field(field, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn ensure_non_negative(field: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::field(field, format!("must be finite and >= 0, got {value}")))
    }
}

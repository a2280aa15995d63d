use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A state variable lies outside the model's domain (e.g. x <= 0).
    #[error("{name} = {value} is outside the domain: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A configuration parameter violates its invariant.
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("state became non-finite at step {step} (x = {x}, y = {y}); try a smaller dt")]
    NonFinite { step: u64, x: f64, y: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("transition window of {window} exceeds trajectory duration {duration}")]
    WindowTooLong { window: f64, duration: f64 },

    #[error("unknown preset `{name}`; available: {available}")]
    UnknownPreset { name: String, available: String },
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            reason,
        }
    }

    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}

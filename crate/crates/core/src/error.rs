use thiserror::Error;

/// Errors raised by the numerical kernels and the probabilistic layers built on them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tolerance not met: best estimate {estimate:e} with error estimate {error_estimate:e}")]
    ToleranceNotMet { estimate: f64, error_estimate: f64 },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("target {target} is not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
        target: f64,
    },

    #[error("value {value} lies outside the range ({lower}, {upper}) of the map being inverted")]
    Range { value: f64, lower: f64, upper: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("characteristic function has magnitude {magnitude:e} at cutoff {cutoff}; tail mass is not negligible")]
    Cutoff { cutoff: f64, magnitude: f64 },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}

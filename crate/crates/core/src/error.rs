use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("basis index {index} out of range (model has {len} terms)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("point {x} lies outside the domain [{a}, {b}]")]
    DomainViolation { x: f64, a: f64, b: f64 },

    #[error("correlation matrix degenerate at x = {x}: {reason}")]
    G2Violation { x: f64, reason: String },

    #[error("covariance factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("density evaluated to a non-finite value at x = {x}")]
    NonFiniteDensity { x: f64 },

    #[error("density integrates to zero on [{a}, {b}]")]
    DegenerateDensity { a: f64, b: f64 },

    #[error("target probability {0} must lie in [0, 1)")]
    InvalidProbability(f64),

    #[error("local covariance is not positive definite at x = {x}, delta = {delta}")]
    NotPositiveDefinite { x: f64, delta: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for the failures that stem from a degenerate covariance structure
    /// rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::G2Violation { .. }
                | Error::FactorizationFailure(_)
                | Error::NonFiniteDensity { .. }
                | Error::DegenerateDensity { .. }
                | Error::NotPositiveDefinite { .. }
        )
    }
}

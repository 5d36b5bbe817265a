//! Rational SISO transfer functions, their frequency response, unity-feedback
//! composition, pole-based stability tests and state-space realizations.

mod polynomial;
mod state_space;
mod transfer;

pub use polynomial::Polynomial;
pub use state_space::StateSpace;
pub use transfer::{TransferFunction, CANCELLATION_TOLERANCE, STABILITY_EPSILON};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LtiError {
    #[error("denominator is the zero polynomial")]
    ZeroDenominator,
    #[error("coefficients must be finite")]
    NonFinite,
    #[error("pole on the imaginary axis at omega = {omega}")]
    PoleOnImaginaryAxis { omega: f64 },
    #[error("invalid frequency {0}: must be finite and non-negative")]
    InvalidFrequency(f64),
    #[error("invalid frequency scale {0}: must be finite and positive")]
    InvalidScale(f64),
    #[error("1 + P(s)C(s) is identically zero")]
    DegenerateLoop,
    #[error("improper transfer function: numerator degree {num_degree} exceeds denominator degree {den_degree}")]
    ImproperTransferFunction { num_degree: usize, den_degree: usize },
    #[error("inconsistent state-space dimensions: {0}")]
    DimensionMismatch(String),
}

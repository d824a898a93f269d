use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("proximal step must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("invalid moduli: need 0 < m <= L, got m = {m}, L = {lipschitz}")]
    InvalidModuli { m: f64, lipschitz: f64 },

    #[error("gamma must lie in (0, 1/L): gamma = {gamma}, 1/L = {bound}")]
    GammaOutOfRange { gamma: f64, bound: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("eigenvalue iteration did not converge after {iterations} sweeps")]
    EigenNotConverged { iterations: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("bound vacuous: A1 = {a1} >= 1")]
    BoundVacuous { a1: f64 },

    #[error(
        "horizons too short for the second-order bound: zeta^(P+C) = {zeta_pc} >= tau = {tau}"
    )]
    HorizonsTooShort { zeta_pc: f64, tau: f64 },

    #[error(
        "strong convexity modulus is zero (m = {m:e}); use alpha < 1 when A^T A is rank deficient"
    )]
    NotStronglyConvex { m: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

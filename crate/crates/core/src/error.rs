use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("not resolved: {0}")]
    NotResolved(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("system has no state Jacobian")]
    MissingJacobian,

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("contraction criterion violated at x={x:?}, u={u}: margin {margin:e}")]
    CriterionViolated { margin: f64, x: Vec<f64>, u: f64 },

    #[error("trajectory left the invariant ball: |x|={norm} > radius {radius} at t={t}")]
    ContainmentViolated { norm: f64, radius: f64, t: usize },

    #[error("state matrix is not Schur (spectral radius {rho})")]
    UnstableA { rho: f64 },

    #[error("gamma * |G|_inf = {product} is not below 1")]
    NormTooLarge { product: f64 },

    #[error("iteration did not converge after {iterations} steps (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64, trace: Vec<f64> },

    #[error("assumption failed: {assumption}: {detail}")]
    AssumptionFailed { assumption: &'static str, detail: String },

    #[error("grid verification contradicts algebraic certificate: {0}")]
    CrossCheckFailed(String),

    #[error("training diverged at step {step}")]
    TrainingDiverged { step: usize },

    #[error("filter coefficient h[{index}] = {value} violates |h| <= C*lambda^s = {bound}")]
    DecayViolated { index: usize, value: f64, bound: f64 },

    #[error("least-squares system is ill conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { name, reason: reason.into() }
    }
}

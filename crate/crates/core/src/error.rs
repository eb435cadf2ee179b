use num_complex::Complex64;
use thiserror::Error;

/// Everything that can go wrong inside the numerical core.
///
/// Variants carry enough context (the offending λ, mode, field) that a caller
/// can turn them into a machine-readable error record without re-deriving it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mode {mode}: conormal polynomial vanishes identically")]
    DegeneratePolynomial { mode: usize },

    #[error("indicial root {root} lies on the strip boundary Re z = {line}; shift the weight")]
    RootOnBoundary { root: Complex64, line: f64 },

    #[error("numerically singular system at λ = {lambda} (mode {mode}, condition ≈ {cond:.3e})")]
    Singular { lambda: Complex64, mode: usize, cond: f64 },

    #[error("eigenvalue {eigenvalue} (mode {mode}) collides with the contour: {detail}")]
    ContourCollision { eigenvalue: Complex64, mode: usize, detail: String },

    #[error("eigenvalue {eigenvalue} (mode {mode}) lies on the branch cut of λ^z")]
    BranchCut { eigenvalue: Complex64, mode: usize },

    #[error("eigenvector matrix of mode {mode} is too ill-conditioned ({cond:.3e})")]
    IllConditioned { mode: usize, cond: f64 },

    #[error("eigensolver did not converge for mode {mode}")]
    NoConvergence { mode: usize },

    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

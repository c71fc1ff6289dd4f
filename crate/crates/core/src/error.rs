use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix at grid point {point} is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { point: usize, min_eigenvalue: f64 },

    #[error("curvature endomorphism M left the positive cone at grid point {point} (min eigenvalue {min_eigenvalue:e})")]
    NonPositiveM { point: usize, min_eigenvalue: f64 },

    #[error("Newton did not converge in {iterations} iterations (residual {residual_norm:e})")]
    MaxIterExceeded { iterations: usize, residual_norm: f64 },

    #[error("line search stalled at residual {residual_norm:e}")]
    LineSearchStall { residual_norm: f64 },

    #[error("cushioned Hermitian-Einstein solve did not converge (residual {residual_norm:e})")]
    NoConvergence { residual_norm: f64 },

    #[error("field is not a projector (|pi^2 - pi| = {defect:e})")]
    NotAProjector { defect: f64 },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter {name}: {constraint}")]
    InvalidParameter { name: &'static str, constraint: String },
}

pub type Result<T> = std::result::Result<T, Error>;

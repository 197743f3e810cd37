use thiserror::Error;

/// Errors raised by the kinetic, diffusion and certificate routines.
#[derive(Debug, Error)]
pub enum KinError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {dt:e} violates the transport CFL limit; required dt <= {max_dt:e}")]
    Cfl { dt: f64, max_dt: f64 },

    #[error("non-finite values produced by {0}")]
    NonFinite(&'static str),

    #[error("conjugate gradients stalled after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("inner product <w, L^-1 w> = {0:e} is negative; the elliptic operator is not positive definite")]
    NotPositiveDefinite(f64),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("hypothesis violated at sample {index} (t = {t}): {what}")]
    Hypothesis { index: usize, t: f64, what: String },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KinError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(KinError::InvalidParameter(msg.into()))
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last sup-difference {last_difference:e})")]
    NotConverged {
        iterations: usize,
        last_difference: f64,
    },

    #[error("variational inequality violated: residual {residual:e} below tolerance -{tolerance:e}")]
    OptimalityViolated { residual: f64, tolerance: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

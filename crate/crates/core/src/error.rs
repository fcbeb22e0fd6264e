use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel evaluated at |x| = {0:e}, below the singularity guard")]
    Singular(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("particles {0} and {1} coincide")]
    Coincident(usize, usize),

    #[error("particles {i} and {j} in contact at t = {t}: distance {dist:e} <= 2R(1+1e-6)")]
    Contact { t: f64, i: usize, j: usize, dist: f64 },

    #[error("non-finite value encountered at t = {0}")]
    NotFinite(f64),

    #[error("point {0} lies outside the field domain")]
    OutsideDomain(usize),

    #[error("source too close to the padded boundary: {0:.3e} of its mass lies outside the exact region")]
    Truncation(f64),

    #[error("fixed point does not contract: {0}")]
    NonContraction(String),

    #[error("support too small: {0}")]
    Support(String),

    #[error("rejection sampling failed after {0} retries")]
    Rejection(usize),

    #[error("problem too large: {0}")]
    SizeCap(String),

    #[error("infeasible transport problem: {0}")]
    Infeasible(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

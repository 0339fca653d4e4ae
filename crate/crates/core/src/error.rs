use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not column-stochastic: column {column} sums to {sum}")]
    NotStochastic { column: usize, sum: f64 },

    #[error("vertex {0} has no outgoing edges")]
    ZeroOutDegree(usize),

    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("eigendecomposition residual {0:e} exceeds tolerance")]
    Decomposition(f64),

    #[error("unmarked dynamics has an eigenvalue {0} at 1; marked set is unreachable")]
    NoPerronSeparation(f64),

    #[error("spectral gap vanishes (second eigenvalue {0})")]
    NoSpectralGap(f64),

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("iteration cap of {0} steps exceeded")]
    CapExceeded(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("calibration failed on {instance}: {reason}")]
    Calibration { instance: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

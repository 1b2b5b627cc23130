use thiserror::Error;

/// Errors raised by model construction, the special functions and the
/// estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("covariance matrix is not symmetric (entry ({row}, {col}))")]
    NotSymmetric { row: usize, col: usize },

    #[error("covariance matrix is not positive definite (Cholesky pivot {pivot} is {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument {0} outside the open unit interval")]
    Domain(f64),

    #[error("truncation region is empty")]
    EmptyRegion,

    #[error("optimizer did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("log-likelihood ratio is unbounded above; acceptance-rejection is not possible")]
    Unbounded,

    #[error("requested Sobol dimension {requested} exceeds the {supported} available direction numbers")]
    DimTooLarge { requested: usize, supported: usize },

    #[error("estimator requires an iid model (equal means, diagonal covariance with equal variances)")]
    NotIid,

    #[error("need at least {needed} samples, have {have}")]
    Insufficient { needed: u64, have: u64 },

    #[error("model file: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

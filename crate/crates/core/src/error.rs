use thiserror::Error;

/// Errors raised by the modelling, estimation and control layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// RK4 produced a non-finite state component.
    #[error("integration failure: state component {index} is not finite")]
    IntegrationFailure { index: usize },

    #[error("linearization failure: non-finite derivative {what}[{row},{col}]")]
    LinearizationFailure {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("pair (A, C) is not observable: observability rank {rank} < {n_x}")]
    Unobservable { rank: usize, n_x: usize },

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("estimator failure: {0}")]
    EstimatorFailure(String),

    /// φ'P⁻φ + r was not strictly positive in the ARX parameter filter.
    #[error("covariance corruption in channel {channel}: innovation variance {value}")]
    CovarianceCorruption { channel: usize, value: f64 },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

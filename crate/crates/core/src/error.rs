use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("probe carries zero energy")]
    ZeroEnergy,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),

    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("outcome {outcome} has probability {probability:e} below the floor with non-vanishing derivative")]
    ProbabilityUnderflow { outcome: usize, probability: f64 },

    #[error("numerical procedure did not converge: {0}")]
    NonConvergence(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of an iterative or floating-point procedure rather
    /// than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular | Error::ProbabilityUnderflow { .. } | Error::NonConvergence(_)
        )
    }
}

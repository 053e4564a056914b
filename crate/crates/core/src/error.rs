use thiserror::Error;

/// Errors raised by the estimators and geometry routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MixregError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    /// det of the concentration Gram matrix is at or below the singularity threshold.
    #[error("concentration Gram matrix is singular (det = {det:e}); component mixing probabilities are not linearly independent")]
    SingularGram { det: f64 },

    #[error("weighted design matrix for component {component} is singular or ill-conditioned (condition number {condition:e})")]
    SingularDesign { component: usize, condition: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("Hessian is singular or ill-conditioned at the pilot estimate")]
    SingularHessian,

    #[error("empirical information matrix is singular or ill-conditioned")]
    SingularInfo,

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("component {component} is starved: total posterior weight {weight:e}")]
    DegenerateComponent { component: usize, weight: f64 },

    #[error("unsupported dimension {0}; only d = 2 is supported")]
    UnsupportedDim(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, MixregError>;

use mixreg::MixregError;
use thiserror::Error;

/// Failure classes with fixed process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    /// Malformed config or input data.
    #[error("{0}")]
    Input(String),
    /// Simulation finished but too many replications failed.
    #[error("{0}")]
    TooManyFailures(String),
    /// The estimators could not be computed on this data.
    #[error("{0}")]
    Estimation(String),
    #[error("{0}")]
    UnsupportedDim(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Input(_) => 2,
            CliError::TooManyFailures(_) => 3,
            CliError::Estimation(_) => 4,
            CliError::UnsupportedDim(_) => 5,
        }
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<MixregError> for CliError {
    fn from(err: MixregError) -> Self {
        match err {
            MixregError::Config(_)
            | MixregError::InvalidSample(_)
            | MixregError::DimensionMismatch(_) => CliError::Input(err.to_string()),
            MixregError::UnsupportedDim(_) => CliError::UnsupportedDim(err.to_string()),
            MixregError::SingularGram { .. } => CliError::Estimation(format!(
                "{err}. The mixing-probability columns must not be (nearly) linearly dependent; \
                 e.g. identical concentration rows make the components indistinguishable"
            )),
            MixregError::SingularDesign { .. } => CliError::Estimation(format!(
                "{err}. The regressors of this component carry too little information; \
                 check for collinear or constant regressor columns"
            )),
            other => CliError::Estimation(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

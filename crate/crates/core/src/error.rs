use thiserror::Error;

/// Precondition violations on numeric inputs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("quaternion norm {0} is not within tolerance of 1")]
    NonUnitQuaternion(f64),
    #[error("time step must be positive, got {0}")]
    NonPositiveTimeStep(f64),
    #[error("ray direction has zero length")]
    ZeroDirection,
    #[error("ray direction norm {0} is not 1")]
    NonUnitDirection(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not symmetric positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),
}

/// Failure while advancing an ODE.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("non-finite derivative at step {step}")]
    NonFiniteDerivative { step: u64 },
    #[error("non-finite state after step {step}")]
    NonFiniteState { step: u64 },
}

/// Startup-time configuration faults.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: field `{field}`: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("allocation matrix is rank deficient (smallest singular value {0:e})")]
    RankDeficientAllocation(f64),
    #[error("control allocation requires exactly 4 motors, vehicle has {0}")]
    UnsupportedMotorCount(usize),
}

impl ConfigError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid { path: path.into(), message: message.into() }
    }
}

use thiserror::Error;

/// Errors raised by the calculus, the estimators and the model layer.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Inconsistent inputs: mismatched schemes, bad dimensions, unknown names.
    #[error("configuration error: {0}")]
    Config(String),
    /// A parameter or node fell outside the region where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Mass, centering or orthogonality requirements were not met.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Singular or indefinite matrices and other linear-algebra failures.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A path left the space of densities before the requested t.
    #[error("path error: density turns nonpositive; largest feasible t is {max_feasible_t:e}")]
    Path { max_feasible_t: f64 },
    /// A declared model structure did not hold numerically.
    #[error("model error: {0}")]
    Model(String),
}

pub type Result<T> = std::result::Result<T, Error>;

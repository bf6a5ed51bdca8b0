//! Error type shared by all modules. Validation failures and solver
//! breakdowns are separate variants so callers can map them to distinct
//! process exit codes.

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Rejected input: bad dimensions, non-symmetric coefficients, parameters
    /// out of range, malformed configuration, and the like.
    #[error("validation: {0}")]
    Validation(String),

    /// An iterative solve stopped without reaching the requested tolerance.
    /// The tail of the residual history is kept for diagnosis.
    #[error("solver: {context}: relative residual {final_residual:.3e} after {iterations} iterations (budget {max_iterations})")]
    Solver {
        context: String,
        iterations: usize,
        max_iterations: usize,
        final_residual: f64,
        residual_tail: Vec<f64>,
    },

    /// A matrix that the algebra requires to be invertible was singular or
    /// indefinite beyond tolerance.
    #[error("singular: {0}")]
    Singular(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed snapshot or report payload.
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn singular(msg: impl Into<String>) -> Self {
        Error::Singular(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

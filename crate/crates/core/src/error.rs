use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OboError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A non-finite value appeared. `iteration` is set when it came out of an iterative routine.
    #[error("non-finite value in {context}{}", .iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        context: &'static str,
        iteration: Option<usize>,
    },

    #[error("conjugate gradient breakdown at iteration {iteration}: curvature {curvature:e}")]
    SolverBreakdown { iteration: usize, curvature: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("oracle capability missing: {0}")]
    OracleCapability(&'static str),

    #[error("{context} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("window buffer is empty")]
    EmptyWindow,

    #[error("invalid projection domain: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("run log is empty")]
    EmptyLog,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for OboError {
    fn from(e: std::io::Error) -> Self {
        OboError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, OboError>;

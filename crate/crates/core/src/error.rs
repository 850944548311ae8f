use thiserror::Error;

/// Errors raised by the numeric core and the scenario plumbing around it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPosDef(String),

    #[error("hermitian eigensolver did not converge on a {dim}x{dim} matrix (residual {residual:e})")]
    EigNonConvergence { dim: usize, residual: f64 },

    #[error("canonical fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        delta: Vec<f64>,
        delta_tilde: Vec<f64>,
    },

    #[error("covariance optimization did not converge: {0}")]
    OuterNonConvergence(Box<crate::optimizer::OptimizeFailure>),

    #[error("waterfilling direction is degenerate: every eigenvalue is below {threshold:e}")]
    DegenerateDirection { threshold: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical iteration, as opposed to bad input.
    pub fn is_numerical_non_convergence(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::OuterNonConvergence(_)
                | Error::EigNonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

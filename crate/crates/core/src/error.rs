use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("all observation weights fall below {floor:e}")]
    DegenerateWeights { floor: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular matrix in {what} (condition number {condition:e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("monte-carlo dimension {dim} exceeds cap {cap}; use the multistep or simultaneous procedures for d = {d}")]
    DimensionCap { dim: usize, cap: usize, d: usize },

    #[error("covariance has eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}")]
    InvalidCovariance { min_eigenvalue: f64, tolerance: f64 },

    #[error("CLIME row {row} is infeasible at level {gamma:e}")]
    Infeasible { row: usize, gamma: f64 },

    #[error("cannot studentize: diagonal entry {coord} of G is {value:e}")]
    InvalidStudentization { coord: usize, value: f64 },

    #[error("{failures} of {attempts} replications failed for method {method}")]
    TooManyFailures {
        method: String,
        failures: usize,
        attempts: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

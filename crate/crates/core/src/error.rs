use thiserror::Error;

pub type Result<T> = std::result::Result<T, AloError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AloError {
    #[error("matrix of dimension {dim} is not positive definite (Cholesky failed after jitter)")]
    NotPositiveDefinite { dim: usize },

    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("inner Woodbury matrix I + G X L^-1 X' G is numerically singular")]
    SingularInnerMatrix,

    #[error("hat-matrix system is singular: {0}")]
    SingularSystem(String),

    #[error("response {value} is outside the support of the {family} family")]
    UnsupportedResponse { family: &'static str, value: f64 },

    #[error("penalty derivative requested at an exact zero (coordinate {index})")]
    NonSmoothAtZero { index: usize },

    #[error("bridge proximal solve did not converge for input {input}")]
    ProxNoConvergence { input: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    #[error("error metric {metric} cannot be used with the {family} family")]
    IncompatibleMetric { metric: &'static str, family: &'static str },

    #[error("invalid correlation parameter {0}")]
    InvalidCorrelation(f64),

    #[error("response generation is not supported for the {0} family")]
    UnsupportedFamily(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

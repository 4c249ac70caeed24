use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} = {value} is outside the supported range [{min}, {max}]")]
    Range {
        what: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },

    #[error("{0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("zero pivot at index {index} during factorization")]
    ZeroPivot { index: usize },

    #[error("matrix is singular to working precision")]
    Singular,

    #[error("diagonal entries {first} and {second} coincide; lower factor is not diagonalizable by the recursion")]
    Degenerate { first: usize, second: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("inner solve for block {block} did not converge (relative residual {residual:e})")]
    InnerSolve { block: usize, residual: f64 },

    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage system did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("dense oracle limited to dimension {limit}, requested {size}")]
    SizeGuard { size: usize, limit: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

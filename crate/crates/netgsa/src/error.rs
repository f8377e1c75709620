use thiserror::Error;

/// Errors produced by estimation, testing, and I/O routines.
///
/// Numerical routines fail loudly rather than returning silently degraded
/// results; callers that can tolerate a failure (e.g. one split out of many)
/// decide that at their own level.
#[derive(Error, Debug)]
pub enum Error {
    #[error("column {index} ({gene}) is constant; cannot standardize")]
    ConstantColumn { index: usize, gene: String },

    #[error("{context}: need at least {needed} samples, got {got}")]
    TooFewSamples {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{context}: matrix is not positive definite")]
    NotPositiveDefinite { context: &'static str },

    #[error("penalty grid is degenerate: all off-diagonal covariances are zero")]
    DegenerateGrid,

    #[error(
        "graphical lasso did not converge in {sweeps} sweeps (last duality gap {gap:.3e})"
    )]
    GlassoNonConvergence { sweeps: usize, gap: f64 },

    #[error("lasso coordinate descent did not converge in {iters} iterations")]
    LassoNonConvergence { iters: usize },

    #[error(
        "iterative proportional fitting did not converge in {iters} iterations \
         (largest likelihood-equation violation {violation:.3e}); \
         the constrained MLE may not exist for this sample size"
    )]
    IpfNonConvergence { iters: usize, violation: f64 },

    #[error("numerical integration failed: {detail}")]
    Integration { detail: String },

    #[error("p-value at index {index} is {value}, outside [0, 1]")]
    InvalidPValue { index: usize, value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("duplicate gene identifier {id:?}")]
    DuplicateGene { id: String },

    #[error("duplicate gene-set name {name:?}")]
    DuplicateSet { name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("outside formula domain: {0}")]
    Domain(String),

    #[error("missing constant `{0}`")]
    MissingConstant(&'static str),

    #[error("no convergence after {iters} iterations (last residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("root bracket not found up to {upper:e}")]
    BracketFailure { upper: f64 },

    #[error("adaptive quadrature did not reach tolerance {tol:e}")]
    QuadratureNonConvergence { tol: f64 },

    #[error("support violation at grid index {index}: rho > 0 where nu vanishes")]
    SupportViolation { index: usize },

    #[error("chain diverged at step {step}")]
    Divergence { step: usize },

    #[error("chains diverged: {0:?}")]
    EnsembleDivergence(Vec<usize>),

    #[error("empty dataset")]
    EmptyData,

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

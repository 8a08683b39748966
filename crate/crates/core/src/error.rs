use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("expected a {expected} field, got {found}")]
    WrongKind { expected: &'static str, found: &'static str },

    #[error("lattice too large for exact factorization: {points} points (limit {limit})")]
    Infeasible { points: usize, limit: usize },

    #[error("covariance matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("sampler cost {cost:.3e} per sample exceeds budget {budget:.3e}; {hint}")]
    Budget { cost: f64, budget: f64, hint: String },

    #[error("unsupported spatial dimension d = {0}; the solver is one-dimensional")]
    UnsupportedDimension(usize),

    #[error("need at least {needed} {what}, got {got}")]
    TooFew { what: &'static str, needed: usize, got: usize },

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("field format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

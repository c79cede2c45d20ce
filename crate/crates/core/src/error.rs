use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message} (near `{token}`)")]
    Parse {
        line: usize,
        column: usize,
        token: String,
        message: String,
    },

    #[error("domain error in `{expr}`: {message}")]
    Domain { expr: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("derivative stencil cannot avoid y = 0 at direction {direction:?}")]
    SingularDirection { direction: Vec<f64> },

    #[error("unsupported derivative order {0} (at most 4 in y and 1 in x)")]
    DerivativeOrder(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("metric tensor is singular at x = {x:?}, y = {y:?}")]
    SingularMetric { x: Vec<f64>, y: Vec<f64> },

    #[error("metric tensor is not positive definite at x = {x:?}, y = {y:?}")]
    NotPositiveDefinite { x: Vec<f64>, y: Vec<f64> },

    #[error("connection coefficients depend on the direction at x = {x:?} (spread {spread:.3e} > {tolerance:.1e})")]
    DirectionDependent {
        x: Vec<f64>,
        spread: f64,
        tolerance: f64,
    },

    #[error("trajectory left the chart box at t = {t}: x = {x:?}")]
    LeftChart { t: f64, x: Vec<f64> },

    #[error("vector collapsed to zero at t = {t}")]
    ZeroVector { t: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("degenerate point set: rank {rank} < {dim}")]
    DegeneratePoints { rank: usize, dim: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Monte-Carlo estimate unreliable: {0}")]
    InsufficientSamples(String),

    #[error("invalid field: {0}")]
    InvalidField(String),
}

pub type Result<T> = std::result::Result<T, Error>;

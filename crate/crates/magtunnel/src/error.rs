use crate::quad::QuadError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate well: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("Newton iteration failed at {at}: {reason}")]
    Newton { at: String, reason: String },
    #[error("no root of B(it, q2) = b0 in the strip at q2 = {q2}")]
    NoLevelCurve { q2: f64 },
    #[error("ODE step rejected below minimum step at x2 = {x2}")]
    StepUnderflow { x2: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("cross-check `{name}` failed: {lhs:e} vs {rhs:e} (relative gap {rel:e}, allowed {tol:e})")]
    CrossCheck {
        name: &'static str,
        lhs: f64,
        rhs: f64,
        rel: f64,
        tol: f64,
    },
    #[error("oscillator basis verification failed for n = {n}: residual {residual:e}")]
    Basis { n: usize, residual: f64 },
    #[error("state degree {degree} exceeds basis size {n_max}")]
    DegreeTooHigh { degree: usize, n_max: usize },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

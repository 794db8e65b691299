use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(
        "grid too coarse for h = {h}: spacing {spacing} exceeds {limit} (rule: spacing <= 0.15 sqrt(h) and <= min(L)/50)"
    )]
    GridTooCoarse { h: f64, spacing: f64, limit: f64 },
    #[error("shift {sigma} is not below the spectrum: the factorization of H - sigma is not positive definite")]
    ShiftNotBelowSpectrum { sigma: f64 },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("eigensolver did not converge after {cycles} restarts; Ritz values {ritz:?}, residuals {residuals:?}")]
    NoConvergence {
        cycles: usize,
        ritz: Vec<f64>,
        residuals: Vec<f64>,
    },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error(transparent)]
    Field(#[from] magtunnel::Error),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for SpectraError {
    fn from(e: std::io::Error) -> Self {
        SpectraError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SpectraError>;

use magtunnel_spectra::SpectraError;
use std::path::PathBuf;
use thiserror::Error;

/// Failure classes of the harness, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad config: {0}")]
    Config(String),
    #[error("missing input {}: {what}", path.display())]
    MissingInput { path: PathBuf, what: &'static str },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 0 ok, 1 invariant violation, 2 numerical failure, 3 bad config.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Numerical(_) | CliError::Io { .. } => 2,
            CliError::Config(_) | CliError::MissingInput { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<magtunnel::Error> for CliError {
    fn from(e: magtunnel::Error) -> Self {
        use magtunnel::Error as E;
        match e {
            E::InvalidParams(_) => CliError::Config(e.to_string()),
            E::CrossCheck { .. } | E::Precondition(_) | E::Basis { .. } | E::Degenerate(_) => {
                CliError::Invariant(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SpectraError> for CliError {
    fn from(e: SpectraError) -> Self {
        match e {
            SpectraError::Field(inner) => inner.into(),
            SpectraError::Grid(_) | SpectraError::GridTooCoarse { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

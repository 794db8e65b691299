//! Harness for the tunneling pipeline: configuration, orchestration of the
//! asymptotic and spectral computations, the gap fit and report emission.

pub mod commands;
pub mod config;
pub mod error;
pub mod fit;

pub use config::{Loaded, Preset, RunConfig};
pub use error::{CliError, Result};
pub use fit::{fit_gap, GapFit, GapPoint};

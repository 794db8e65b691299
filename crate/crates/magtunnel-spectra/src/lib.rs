//! Direct spectra of the two-dimensional magnetic Laplacian `(-i h grad - A)^2`.
//!
//! The operator is discretized on a Dirichlet box with a five-point stencil
//! whose hoppings carry Peierls phases `exp(-(i/h) int A . dl)`, so the matrix
//! is Hermitian by construction and gauge changes act as exact diagonal
//! unitaries. The lowest eigenpairs come from shift-invert Krylov-Schur on a
//! sparse Cholesky factorization; the two lowest states are labelled by the
//! parity `U f(q) = f(-q)`.

pub mod assemble;
pub mod error;
pub mod gauge;
pub mod grid;
pub mod lanczos;
pub mod single_well;
pub mod spectrum;

pub use assemble::{assemble, MagneticOperator};
pub use error::{Result, SpectraError};
pub use gauge::GaugeChoice;
pub use grid::GridSpec;
pub use spectrum::{refinement_check, RefinementCheck, lowest_eigenpairs, solve_extrapolated, solve_on_grid, ExtrapolatedSpectrum, SolverOptions, SpectrumResult};

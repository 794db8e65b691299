//! Semiclassical tunneling between two purely magnetic wells.
//!
//! The crate computes the ingredients of the gap law
//! `lambda_2 - lambda_1 ~ c0 h^{3/2} exp(-S/h)` for a two-dimensional magnetic
//! Laplacian: field models ([`field_model`]), the Darboux straightening of
//! the magnetic two-form ([`darboux`]), the complex eikonal and the action
//! ([`eikonal`]), and the oscillator algebra plus transport equation that
//! produce the prefactor ([`oscillator`], [`amplitude`]).
//!
//! Numerical building blocks ([`quad`], [`spline`]) are generic over the
//! scalar type; the physics layers use `f64`.

pub mod amplitude;
pub mod darboux;
pub mod eikonal;
pub mod error;
pub mod field_model;
pub mod oscillator;
pub mod quad;
pub mod scalar;
pub mod spline;

pub use error::{Error, Result};
pub use scalar::Real;

pub type C64 = num_complex::Complex<f64>;
pub type C32 = num_complex::Complex<f32>;

/// Imaginary unit in double precision.
pub const I: C64 = C64::new(0.0, 1.0);

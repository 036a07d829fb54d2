//! Spectral diagnostics and singular-direction surgery for weight
//! checkpoints, a numerical lab for rotation-gauge updates, and a verifier
//! for the 24-point card game.
//!
//! The dense linear algebra is generic over [`Real`] (`f32`/`f64`); the
//! aliases below fix the 64-bit working precision used by checkpoint
//! analyses. Game arithmetic uses exact rationals.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod gauge;
pub mod gp;
pub mod linalg;
pub mod matrix;
pub mod scalar;
pub mod spectral;
pub mod store;
pub mod surgery;

pub use matrix::Matrix;
pub use scalar::Real;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Svd64 = linalg::SvdFactors<f64>;
pub type Svd32 = linalg::SvdFactors<f32>;
pub type Angles64 = linalg::PrincipalAngleSpectrum<f64>;

/// Exact rational used by the card game.
pub type Rational = num_rational::BigRational;

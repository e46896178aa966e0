//! Numerical laboratory for disentanglement in Gaussian VAEs.
//!
//! The crate is generic over the scalar type ([`Real`], implemented for `f32` and
//! `f64`); the aliases below fix it to `f64`, which is what the experiments use.

pub mod datagen;
pub mod error;
pub mod geometry;
pub mod identify;
pub mod lvm;
pub mod metrics;
pub mod linalg;
pub mod net;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type SvdTriple = linalg::SvdTriple<f64>;

//! Kinetic transport with scattering on a rectangle, its diffusion limit,
//! and numerical certificates for the associated observation inequalities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod diffusion;
pub mod error;
pub mod grid;
pub mod kinetic;
pub mod scattering;

pub use error::{KinError, Result};

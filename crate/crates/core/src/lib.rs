//! Numerical checks of index identities for periodic orbits of a planar
//! magnetic system: circular orbits, orbit cylinders, Conley–Zehnder and
//! transverse indices, discretized Morse indices and bordered spectral flow.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod halfint;
pub mod indices;
pub mod magnetic_profile;
pub mod model;
pub mod morse_index;
pub mod orbits;
pub mod scenario;
pub mod spectral_flow;

pub use error::{Error, Result};
pub use halfint::HalfInt;

//! Random walks confined to cones: simulation, harmonic functions and
//! statistical checks of their limit laws.

pub mod constants;
pub mod context;
pub mod error;
pub mod geometry;
pub mod harmonic;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod steps;
pub mod theorems;
pub mod walk;

pub use error::{Error, Result};

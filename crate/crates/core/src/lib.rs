//! Numerical estimation of the unstable topological pressure of partially
//! hyperbolic torus maps under sub-additive potential sequences.

pub mod dynamics;
pub mod error;
pub mod leaf;
pub mod numeric;
pub mod potentials;
pub mod pressure;
pub mod variational;

pub use error::{Error, Result};

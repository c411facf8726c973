//! Semiclassical resonances attached to a (semi-)hyperbolic periodic orbit:
//! classical orbit data, Floquet analysis, the Bohr–Sommerfeld lattice, and
//! the exactly solvable models and brute-force oracles used to check it.

pub mod bs;
pub mod circle_model;
pub mod dynamics;
pub mod error;
pub mod floquet;
pub mod model_quantum;
pub mod oracle;
pub mod orbits;
pub mod spectral;

pub use error::{Error, Result};

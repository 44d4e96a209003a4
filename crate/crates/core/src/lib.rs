//! Regularity structures and dynamic Φ⁴: symbolic algebra, white noise,
//! heat flow, Wick calculus, solvers, Kac–Ising dynamics, regularity
//! estimation and grid models.

pub mod algebra;
pub mod error;
pub mod grid;
pub mod heat;
pub mod ising;
pub mod model;
pub mod noise;
pub mod phi4;
pub mod regularity;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod wick;

pub use error::{Error, Result};

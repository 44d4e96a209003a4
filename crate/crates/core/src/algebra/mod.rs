//! Symbolic engine: orders, symbols, truncated structures, structure group
//! and renormalization maps.

pub mod coeff;
pub mod counterterm;
pub mod group;
pub mod order;
pub mod renorm;
pub mod structure;
pub mod symbol;
pub mod vector;

pub use coeff::{Coeff, FormalPoly};
pub use order::{KappaRange, OrderExpr, Q};
pub use structure::{generate_symbols, GenerateOptions, RegularityStructure, RuleSet, TNorm, Truncation};
pub use symbol::{trees, Symbol};
pub use vector::Vector;

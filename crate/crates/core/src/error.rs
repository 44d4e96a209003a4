//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("rule set is not subcritical: no fixed point after {0} iterations")]
    NonSubcritical(usize),
    #[error("order comparison depends on kappa within the configured range: {0}")]
    AmbiguousOrder(String),
    #[error("symbol {0} is not part of the structure")]
    UnknownSymbol(String),
    #[error("counterterm reduction left a nonzero residual: {0}")]
    Reduction(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("scale not resolved on the grid: {0}")]
    Unresolved(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("numerical blowup at t = {0}")]
    Blowup(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Crate-wide error type.

use thiserror::Error;

use crate::convex::SolverError;

#[derive(Debug, Error)]
pub enum Error {
    /// Config parse failure or invariant violation, reported with key path.
    #[error("config: {0}")]
    Config(String),
    /// Degenerate geometry (coincident points, zero distances).
    #[error("geometry: {0}")]
    Geometry(String),
    /// A feasibility precondition does not hold.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// Numerical solver failure, with iteration context.
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed dataset or checkpoint file.
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

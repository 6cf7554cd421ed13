use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("no path from origin to destination")]
    NoPath,
    #[error("path enumeration exceeded the cap of {0} paths")]
    PathExplosion(usize),
    #[error("invalid demand {0}")]
    InvalidDemand(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("feasible set is empty")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("solver hit the iteration cap of {0}")]
    MaxIterations(usize),
    #[error("curve tracing exceeded the cap of {0} breakpoints")]
    MaxBreakpoints(usize),
    #[error("subset scan needs {needed} candidates, cap is {cap}")]
    SubsetCapExceeded { needed: usize, cap: usize },
    #[error("invalid path set: {0}")]
    InvalidPathSet(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

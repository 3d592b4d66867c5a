use thiserror::Error;

/// Errors raised by the simulation and numerics routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside the domain on which the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// The caller violated an operation's precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// A depth, size or floating-point range limit was exceeded.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// A numerical integration produced a solution violating its invariants.
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("no convergence after {iterations} iterations (last change {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_unit_interval(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must be in (0,1], got {value}"
        )))
    }
}

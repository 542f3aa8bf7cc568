use thiserror::Error;

/// Errors raised by the geometry, solver, barrier and protocol layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("problem is infeasible (residual violation {violation:e})")]
    Infeasible { violation: f64 },
    #[error("{solver} did not converge after {iterations} iterations")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
    },
    #[error("singular system in {0}")]
    Singular(&'static str),
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
    #[error("agents {0} and {1} are coincident")]
    CoincidentAgents(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

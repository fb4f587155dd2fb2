use thiserror::Error;

/// Errors raised by world construction and every numerical operation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("invalid world spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("negative radicand in {what}: {value:e} (spacelike/complex branch)")]
    NegativeRadicand { what: &'static str, value: f64 },

    #[error("degenerate skeleton: Gram determinant is zero")]
    DegenerateSkeleton,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver failed to converge: {0}")]
    NoConvergence(String),
}

impl Error {
    /// True for failures of an iterative solver as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::NoConvergence(_) | Error::Singular(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

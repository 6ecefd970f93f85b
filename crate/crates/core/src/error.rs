use thiserror::Error;

/// Errors raised by the library.
///
/// Variants split into two families: violated preconditions (bad input) and
/// numerical guards (the computation itself refused to proceed). The CLI maps
/// the families to distinct exit codes through [`Error::is_numerical`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("point ({x}, {y}) lies on the curve within tolerance")]
    OnBoundary { x: f64, y: f64 },

    #[error("point ({x}, {y}) is within {tol:e} of the polygon boundary")]
    BoundaryIndeterminate { x: f64, y: f64, tol: f64 },

    #[error("coincident points cannot define a similarity")]
    CoincidentPoints,

    #[error("address does not match point: {0}")]
    AddressMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("bisection did not converge after {iterations} iterations (|residual| = {residual:e})")]
    BisectionFailed { iterations: usize, residual: f64 },

    #[error("M0 search exceeded the guard rail of {limit}")]
    M0GuardExceeded { limit: usize },

    #[error("memory guard exceeded: {requested} items requested, limit {limit}")]
    MemoryGuard { requested: u128, limit: u128 },

    #[error("pre-fractal polyline self-intersects at edges {0} and {1}")]
    SelfIntersection(usize, usize),

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("mollifier scales do not cover [{need_lo:e}, {need_hi:e}] (have [{have_lo:e}, {have_hi:e}])")]
    ScaleCoverage {
        need_lo: f64,
        need_hi: f64,
        have_lo: f64,
        have_hi: f64,
    },

    #[error("numerical check failed: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors signalling a numerical guard rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BisectionFailed { .. }
                | Error::M0GuardExceeded { .. }
                | Error::MemoryGuard { .. }
                | Error::SelfIntersection(..)
                | Error::Overflow(_)
                | Error::Numerical(_)
                | Error::OnBoundary { .. }
                | Error::BoundaryIndeterminate { .. }
        )
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: &'static str, reason: String },

    #[error("{what}: argument {x} outside the admissible domain [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        x: f64,
        lo: f64,
        hi: f64,
    },

    #[error("integration failed at x = {reached}: {reason}")]
    IntegrationFailure { reached: f64, reason: String },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("degenerate denominator -phi'(-x) - phi'(x) = {value} at x = {x}")]
    DegenerateDenominator { x: f64, value: f64 },

    #[error("h1 - h2 does not change sign on [{lo}, {hi}] (d(lo) = {d_lo}, d(hi) = {d_hi})")]
    NoRootBracket {
        lo: f64,
        hi: f64,
        d_lo: f64,
        d_hi: f64,
    },

    #[error("grid mismatch: expected {expected} points, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("path bundle is missing the `{0}` path")]
    MissingPath(&'static str),

    #[error("the switching regime is required (c1 >= beta gives the never-switch regime)")]
    NotSwitching,
}

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A named scalar parameter violated its precondition.
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// Grid construction or grid/field compatibility failure.
    #[error("grid error: {0}")]
    Grid(String),

    /// Two objects that must share a grid do not.
    #[error("grid mismatch between {left} and {right}")]
    GridMismatch { left: String, right: String },

    /// A field value failed validation (NaN, negative density, ...).
    #[error("invalid field data at node {node}: {reason}")]
    FieldData { node: usize, reason: String },

    /// Requested operation is deliberately unsupported.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An iterative solver failed to converge.
    #[error(
        "solver did not converge after {iterations} iterations (last residual {residual:.3e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    /// A loop or trajectory violated a geometric precondition.
    #[error("loop error: {0}")]
    Loop(String),

    /// Sampling failure (rejection acceptance collapse, empty support, ...).
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Time evolution aborted (node formation, missing frames, ...).
    #[error("evolution aborted at t={time}: {reason}")]
    Evolution { time: f64, reason: String },

    /// Configuration file rejected; `path` is the offending key.
    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        CoreError::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn config(path: &str, reason: impl Into<String>) -> Self {
        CoreError::Config {
            path: path.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;

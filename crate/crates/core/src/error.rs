use std::path::PathBuf;

/// Errors produced by the calibration library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty domain: mask has no active cells")]
    EmptyDomain,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: operands live on different grids")]
    GridMismatch,

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("timestep diverged at step {step}: residual {residual:.3e} after {iterations} Newton iterations")]
    TimestepDiverged {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("invalid observations: {0}")]
    Observation(String),

    #[error("inconsistent trajectories: {0}")]
    Inconsistent(String),

    #[error("line search failed after {backtracks} backtracks")]
    LineSearchFailed { backtracks: usize },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error in {}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyDomain => "empty_domain",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridMismatch => "grid_mismatch",
            Error::InvalidField(_) => "invalid_field",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::TimestepDiverged { .. } => "timestep_diverged",
            Error::LinearSolve(_) => "linear_solve",
            Error::Observation(_) => "observation",
            Error::Inconsistent(_) => "inconsistent",
            Error::LineSearchFailed { .. } => "line_search_failed",
            Error::Config { .. } => "config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

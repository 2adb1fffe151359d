use thiserror::Error;

/// Errors raised by the solver and its configuration layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("switch target {target} at lane {lane}, node {node} is outside 0..{lanes}")]
    InvalidSwitchTarget {
        lane: usize,
        node: usize,
        target: usize,
        lanes: usize,
    },

    #[error("jump iteration did not settle after {0} sweeps (switching cost must be positive)")]
    JumpIterationLimit(usize),

    #[error("scenario schema error at `{path}`: {reason}")]
    Schema { path: String, reason: String },

    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    InvalidScenario(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

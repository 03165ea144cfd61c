use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdamError {
    /// A caller broke an operation's precondition (dimensions, ranges, symmetry).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An iterative kernel failed to converge or produced non-finite output.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cannot draw {paths} distinct delay taps from {taps} available taps")]
    DistinctDelays { paths: usize, taps: usize },

    #[error("zero-forcing infeasible: {0}")]
    Infeasible(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DdamError>;

pub(crate) fn contract(msg: impl Into<String>) -> DdamError {
    DdamError::Contract(msg.into())
}

use thiserror::Error;

use crate::recover::TrajectoryPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gaussian: integrand is not finite at z = {at}")]
    NonFiniteIntegrand { at: f64 },

    #[error("link: `{name}` has no curvature (min(E[f'^2], E[z^2 f'^2]) = {value:e})")]
    DegenerateLink { name: String, value: f64 },

    #[error("link: unknown link function `{0}`")]
    UnknownLink(String),

    #[error("link: no sign change for the basin-radius equation; fell back to clamp R = {clamp:e}")]
    SolverFailure { clamp: f64 },

    #[error("data: contamination fraction {0} outside [0, 1/2)")]
    EpsOutOfRange(f64),

    #[error("data: {n} samples cannot fill {buckets} buckets")]
    TooFewSamples { n: usize, buckets: usize },

    #[error("data: operation requires a dataset with ground truth attached")]
    MissingTruth,

    #[error("robust: filter removed {removed} points, over the budget of {budget}")]
    FilterCollapse { removed: usize, budget: usize },

    #[error("recover: iterate became non-finite at step {iteration}")]
    NonFiniteIterate {
        iteration: usize,
        trajectory: Box<Vec<TrajectoryPoint>>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty graph")]
    EmptyGraph,

    #[error("edge {edge}: negative weight {weight}")]
    NegativeWeight { edge: usize, weight: f64 },

    #[error("edge {edge}: vertex {vertex} out of range for graph of order {order}")]
    VertexOutOfRange { edge: usize, vertex: usize, order: usize },

    #[error("edge {edge}: self-loop at vertex {vertex}")]
    SelfLoop { edge: usize, vertex: usize },

    #[error("zero degree at vertex {0}")]
    ZeroDegree(usize),

    #[error("graph is not connected: {0}")]
    NotConnected(String),

    #[error("vertex {0} is disconnected from cue")]
    DisconnectedFromCue(usize),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("eigensolver failed to converge (residual {residual:e})")]
    EigenFailure { residual: f64 },

    #[error("edge {edge}: timestamp {time} outside time grid [{start}, {end})")]
    TimestampOutsideGrid { edge: usize, time: f64, start: f64, end: f64 },

    #[error("edge {0}: kernel mode requires timestamps")]
    MissingTimestamp(usize),

    #[error("degenerate detector input: {0}")]
    Degenerate(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::EigenFailure { .. } | Error::Experiment(_)
        )
    }
}

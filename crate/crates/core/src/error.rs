use thiserror::Error;

/// Errors raised anywhere in the simulator, learner or experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("heat exchanger solver did not converge (residual {residual:.3e} kW)")]
    SolverNonConvergence { residual: f64 },

    #[error("plant step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario parse error at row {row}: {message}")]
    ScenarioParse { row: usize, message: String },

    #[error("episode already finished; call reset first")]
    EpisodeFinished,

    #[error("non-finite value in {what} at episode {episode}, step {step}")]
    NonFinite {
        what: String,
        episode: usize,
        step: usize,
    },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("LP infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

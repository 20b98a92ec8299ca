use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinates {point:?} lie outside the chart domain")]
    Domain { point: Vec<f64> },

    /// A trajectory left the chart; `last_t` is the last parameter that was still inside.
    #[error("trajectory left the chart domain after t = {last_t}")]
    Truncated { last_t: f64, point: Vec<f64> },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("semi-norm vanishes at a sampled direction; a norm is required")]
    Seminorm,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("ratio {ratio} outside the attainable range ({lo}, {hi}) of the ratio map")]
    NotInvertible { ratio: f64, lo: f64, hi: f64 },

    #[error("simulation diverged at step {step} (mode {mode}, |u| = {magnitude:e})")]
    Divergence {
        step: usize,
        mode: usize,
        magnitude: f64,
    },

    #[error("target grid not aligned with the simulated grid: {0}")]
    Alignment(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("no design points inside the approximation interval")]
    EmptyDesign,

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

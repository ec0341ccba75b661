use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("step-size condition violated: {0}")]
    StepSize(String),

    #[error("problem construction failed: {0}")]
    Construction(String),

    #[error("singular system: {0}")]
    Rank(String),

    #[error("unsupported problem: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("iterate diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(what: &str, expected: usize, got: usize) -> Self {
        Error::Dimension(format!("{what}: expected {expected} entries, got {got}"))
    }
}

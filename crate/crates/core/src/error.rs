use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("missing context: {0}")]
    MissingContext(String),
    #[error("degenerate field: {0}")]
    DegenerateField(String),
    #[error("layout infeasible after {attempts} attempts")]
    LayoutInfeasible { attempts: usize },
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("integer overflow: {0}")]
    Overflow(String),
    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("bracket exhausted: every configuration failed")]
    BracketExhausted,
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("missing run: {}", .0.display())]
    MissingRun(PathBuf),
    #[error("trial failed: {0}")]
    TrialFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

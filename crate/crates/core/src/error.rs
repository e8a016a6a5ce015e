use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("no connected Erdős–Rényi draw after {attempts} attempts (K={k}, p_g={p})")]
    RetryBudgetExhausted { k: usize, p: f64, attempts: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{solver} did not converge within {iterations} iterations")]
    NoConvergence { solver: &'static str, iterations: usize },

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    #[error("locality violation: node {sender} -> node {receiver} is not an edge")]
    LocalityViolation { sender: usize, receiver: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

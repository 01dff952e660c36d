use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid budget: {0}")]
    InvalidBudget(String),

    #[error("invalid sigma: {0}")]
    InvalidSigma(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

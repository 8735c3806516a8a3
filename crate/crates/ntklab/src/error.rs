use thiserror::Error;

#[derive(Debug, Error)]
pub enum NtkLabError {
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    PowerIterationDiverged { iterations: usize, residual: f64 },

    #[error("gradient flow step underflow at t = {t}: dt halved {halvings} times without descent")]
    StepUnderflow { t: f64, halvings: usize },

    #[error("non-finite loss encountered at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NtkLabError>;

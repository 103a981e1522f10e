use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] satneuro_core::Error),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid network: {0}")]
    Spec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

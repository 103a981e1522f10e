use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] satneuro_core::Error),

    #[error(transparent)]
    Snn(#[from] satneuro_snn::Error),

    #[error(transparent)]
    Cnn(#[from] satneuro_cnn::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("invalid run config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("learning-rate schedule exhausted: step {step} > total {total}")]
    ScheduleExhausted { step: u64, total: u64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("empty batch: every target position is padding")]
    EmptyBatch,
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("missing gradient for trainable parameter `{0}`")]
    MissingGradient(String),
}

pub type Result<T> = std::result::Result<T, NumError>;

use dadapt_numcore::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(#[from] NumError),
    #[error("incompatible: {0}")]
    Incompatible(String),
    #[error("missing adapter for language `{0}`")]
    MissingAdapter(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Incompatible,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Json(_) => ErrorKind::Config,
            Error::Data(_) | Error::Format(_) | Error::Io(_) => ErrorKind::Data,
            Error::Numeric(_) => ErrorKind::Numeric,
            Error::Incompatible(_) | Error::MissingAdapter(_) => ErrorKind::Incompatible,
        }
    }

    /// Short stable code, e.g. `missing_adapter`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Numeric(e) => match e {
                NumError::NonFiniteGradient(_) => "non_finite_gradient",
                NumError::NonFiniteLoss => "non_finite_loss",
                NumError::ScheduleExhausted { .. } => "schedule_exhausted",
                NumError::EmptyBatch => "empty_batch",
                _ => "numeric",
            },
            Error::Incompatible(_) => "incompatible",
            Error::MissingAdapter(_) => "missing_adapter",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

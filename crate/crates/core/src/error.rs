use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum BcpError {
    #[error("expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("every entry is zero; cannot normalize")]
    AllZero,

    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("insufficient data: need {required} examples, have {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("empty input")]
    EmptyInput,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BcpError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        BcpError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, BcpError>;

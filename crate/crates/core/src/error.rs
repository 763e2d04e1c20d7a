use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidPmf(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value domain mismatch: rule `{rule}` expects {expected} values")]
    DomainMismatch { rule: String, expected: &'static str },

    #[error("requested work is too large: {what} needs ~{estimate:.3e} operations (limit {limit:.0e})")]
    TooExpensive {
        what: &'static str,
        estimate: f64,
        limit: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

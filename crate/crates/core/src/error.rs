//! Error type shared by all library modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("overflow in {context}: |value| exceeds {limit:e}")]
    Overflow { context: String, limit: f64 },

    #[error("degenerate reference channel: {0}")]
    DegenerateReference(String),

    #[error("incompatible datasets: {0}")]
    Incompatible(String),

    #[error("framing error: {0}")]
    Framing(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("translation validity: {0}")]
    TranslationValidity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed container: {0}")]
    Container(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

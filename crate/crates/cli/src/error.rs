//! CLI error type: the variant decides the process exit code
//! (configuration errors → 2, numerical/stage errors → 3).

use refimg_core::CoreError;
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration, unreadable inputs, invalid arguments.
    Config(String),
    /// A pipeline stage failed while computing or writing results.
    Stage { stage: &'static str, message: String },
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Stage { stage, message } => write!(f, "stage {stage} failed: {message}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 3,
        }
    }

    /// Wraps a core error, classifying config/domain problems as exit 2.
    pub fn from_core(stage: &'static str, err: CoreError) -> CliError {
        match err {
            CoreError::Config(msg) | CoreError::Domain(msg) => CliError::Config(msg),
            other => CliError::Stage {
                stage,
                message: other.to_string(),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

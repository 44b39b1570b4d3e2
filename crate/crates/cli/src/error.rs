use std::path::Path;

use thiserror::Error;

/// Failures surfaced by the command-line pipeline, grouped by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}:{column}: {message}")]
    Format { path: String, line: usize, column: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] spkver::Error),
}

impl CliError {
    pub const EXIT_USAGE: i32 = 2;
    pub const EXIT_DATA: i32 = 3;
    pub const EXIT_NUMERICAL: i32 = 4;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => Self::EXIT_USAGE,
            CliError::Format { .. } | CliError::Data(_) | CliError::Io { .. } => Self::EXIT_DATA,
            CliError::Core(e) if e.is_numerical() => Self::EXIT_NUMERICAL,
            CliError::Core(spkver::Error::InvalidConfig(_)) => Self::EXIT_USAGE,
            CliError::Core(_) => Self::EXIT_DATA,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

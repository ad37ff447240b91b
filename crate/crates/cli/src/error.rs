use invopt_core::Error as CoreError;
use thiserror::Error;

/// Harness errors, each tied to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(CoreError),
    #[error("numeric error: {0}")]
    Numeric(CoreError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig(msg) => CliError::Config(msg),
            CoreError::Io(msg) => CliError::Io(msg),
            CoreError::NonFiniteState { .. }
            | CoreError::NonFiniteJacobian { .. }
            | CoreError::TapeCorrupt(_)
            | CoreError::Diverged { .. }
            | CoreError::EmptySupport => CliError::Numeric(e),
            other => CliError::Validation(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

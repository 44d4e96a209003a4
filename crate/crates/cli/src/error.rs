use rslab_core::error::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(CoreError),
    #[error("{0}")]
    Core(CoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Failed(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Blowup(_) | CoreError::Quadrature(_) => CliError::Numerical(e),
            CoreError::Invalid(m) | CoreError::GridMismatch(m) | CoreError::Unresolved(m) | CoreError::UnknownSymbol(m) => {
                CliError::Config(m)
            }
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    /// 2 for configuration errors, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            _ => 1,
        }
    }
}

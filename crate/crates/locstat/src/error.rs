use locstat_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] Error),
    /// A check ran to completion and did not pass.
    #[error("failed: {0}")]
    Failed(String),
}

impl CliError {
    /// 1 failed assumption or criterion, 2 usage or config, 3 numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) | CliError::MissingInput(_) => 2,
            CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                Error::InputDomain(_) | Error::Precondition(_) | Error::UnsupportedPreset(_) => 2,
                _ => 3,
            },
        }
    }
}

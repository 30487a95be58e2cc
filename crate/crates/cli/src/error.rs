use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ampgen_core::Error> for CliError {
    fn from(e: ampgen_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

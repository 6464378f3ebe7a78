use std::path::Path;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or input: exit 2.
    #[error("{0}")]
    Config(String),

    /// Rejected by the library, including unreadable inputs: exit 2.
    #[error(transparent)]
    Core(#[from] canmsg::Error),

    /// Anything else, such as a failed write: exit 1.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    pub fn write(path: &Path, e: std::io::Error) -> Self {
        CliError::Internal(format!("cannot write {}: {e}", path.display()))
    }
}

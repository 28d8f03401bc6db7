use std::process::ExitCode;

/// Failure of a CLI command, classified by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration.
    #[error("{0}")]
    Usage(String),
    /// The inputs reach the mathematics but violate its preconditions.
    #[error(transparent)]
    Domain(#[from] hardline_core::Error),
    /// A verification ran and found a violation.
    #[error("{0}")]
    Violation(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Io(_) => 1,
            Self::Domain(_) => 2,
            Self::Violation(_) => 3,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

use std::fmt;

/// Exit-code classes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations. Exit 1.
    Usage(String),
    /// Unreadable, malformed or invalid inputs. Exit 2.
    Data(String),
    /// A bug. Exit 3.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError::Data(message.into())
    }

    /// Prefixes the message with a location such as a file name or line.
    pub fn context(self, at: impl fmt::Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{at}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{at}: {m}")),
            CliError::Internal(m) => CliError::Internal(format!("{at}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<svmf_core::Error> for CliError {
    fn from(e: svmf_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("serialization failed: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

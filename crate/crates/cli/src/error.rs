use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Numeric(#[from] noneq_cat::Error),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn config(path: &str, message: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{path}: {message}"))
    }

    /// Process exit status: 2 for configuration problems, 3 for numeric
    /// failures and 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(noneq_cat::Error::Io(_)) => 1,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

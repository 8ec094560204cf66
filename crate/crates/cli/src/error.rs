use thiserror::Error;

/// Failures of a command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent input; exit 2.
    #[error("{0}")]
    Input(String),
    /// The input was read but the requested property does not hold; exit 1.
    #[error("{0}")]
    Verdict(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Verdict(_) => 1,
        }
    }
}

impl From<trichotomy_core::Error> for CliError {
    fn from(e: trichotomy_core::Error) -> Self {
        use trichotomy_core::Error as E;
        match e {
            E::Precondition(_) | E::Inconsistent(_) | E::TheoremViolation(_) => CliError::Verdict(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

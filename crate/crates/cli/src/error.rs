use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

/// Parameter-type errors from the library are configuration problems; the
/// rest are numerical.
impl From<liftrec::Error> for CliError {
    fn from(e: liftrec::Error) -> Self {
        use liftrec::Error as E;
        match e {
            E::Parameter(_)
            | E::UnknownSolver(_)
            | E::FormMismatch(_)
            | E::Overflow { .. }
            | E::TooLarge { .. }
            | E::Dimension { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

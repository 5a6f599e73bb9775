use std::fmt;

/// Failure of a subcommand, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Invariant(String),
    Numerical(String),
    BlowUp(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
            CliError::BlowUp(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant failure: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::BlowUp(m) => write!(f, "blow-up signal: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<kslab::Error> for CliError {
    fn from(e: kslab::Error) -> Self {
        if e.is_blowup_signal() {
            CliError::BlowUp(e.to_string())
        } else if matches!(e, kslab::Error::InvalidParameter(_)) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
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

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

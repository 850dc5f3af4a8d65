use std::fmt;

/// Failures of a command, each with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or paths. Exit 2.
    Usage(String),
    /// Checks of a preset that did not hold. Exit 1.
    Property(Vec<String>),
    /// The numerics failed. Exit 3.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Property(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Property(failed) => write!(f, "failed checks: {}", failed.join("; ")),
        }
    }
}

impl std::error::Error for CliError {}

impl From<coarsekit::Error> for CliError {
    fn from(e: coarsekit::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

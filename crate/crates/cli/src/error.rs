use std::fmt;

/// Failure of a run, split by the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files.
    Usage(String),
    Io(std::io::Error),
    Compute(scatterbrain::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Compute(e) if !is_input_error(e) => 1,
            _ => 2,
        }
    }

    pub fn status(&self) -> &'static str {
        if self.exit_code() == 1 {
            "compute_error"
        } else {
            "usage_error"
        }
    }
}

/// Library errors that describe the caller's input rather than the
/// computation.
fn is_input_error(e: &scatterbrain::Error) -> bool {
    use scatterbrain::Error::*;
    matches!(e, InvalidParameter(_) | Parse(_) | Io(_))
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::Compute(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<scatterbrain::Error> for CliError {
    fn from(e: scatterbrain::Error) -> Self {
        CliError::Compute(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

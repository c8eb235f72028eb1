use std::fmt;
use std::path::Path;

/// Failure of a command, tagged with its exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Diverged(String),
    Io(String),
    Incompatible(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Io(_) => 4,
            CliError::Incompatible(_) => 5,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Diverged(m) => write!(f, "training diverged: {m}"),
            CliError::Io(m) => write!(f, "{m}"),
            CliError::Incompatible(m) => write!(f, "incompatible inputs: {m}"),
        }
    }
}

impl From<qretina::Error> for CliError {
    fn from(e: qretina::Error) -> Self {
        use qretina::Error as E;
        let text = e.to_string();
        match e {
            E::Divergence { .. } | E::DivergedAt { .. } => CliError::Diverged(text),
            E::Io { .. }
            | E::Format { .. }
            | E::Truncated { .. }
            | E::Checksum { .. }
            | E::VersionMismatch { .. }
            | E::UnsupportedVariant(..)
            | E::UnsupportedDepth(..)
            | E::Json(_) => CliError::Io(text),
            _ => CliError::Usage(text),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

use std::fmt;
use std::process::ExitCode;

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Model or argument syntax errors (exit 2).
    Parse(String),
    /// Bad flag values (exit 2, like clap's own usage errors).
    Usage(String),
    /// Reading or writing files (exit 3).
    Io(String),
    /// A run hit the event cap under `--strict` (exit 4).
    Guard(String),
    /// The drift inequality failed somewhere in the region (exit 5).
    DriftViolation,
    /// Unknown or malformed Lyapunov function (exit 6).
    UnknownFunction(String),
    /// The model does not satisfy the command's hypotheses (exit 7).
    Precondition(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Parse(_) | CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Guard(_) => 4,
            CliError::DriftViolation => 5,
            CliError::UnknownFunction(_) => 6,
            CliError::Precondition(_) => 7,
        })
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Usage(m) => f.write_str(m),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Guard(m) => write!(f, "guard: {m}"),
            CliError::DriftViolation => f.write_str("drift inequality violated at the listed states"),
            CliError::UnknownFunction(m) => write!(f, "{m}"),
            CliError::Precondition(m) => write!(f, "precondition violated: {m}"),
        }
    }
}

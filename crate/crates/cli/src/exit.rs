use std::fmt;
use std::path::Path;
use std::process::ExitCode;

/// A command failure tagged with the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config, or missing inputs: exit 2.
    Usage(anyhow::Error),
    /// Anything that went wrong while doing the work: exit 1.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }

    pub fn code(&self) -> ExitCode {
        match self {
            Failure::Usage(_) => ExitCode::from(2),
            Failure::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait UsageContext<T> {
    /// Reclassifies an error as a usage error.
    fn or_usage(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> UsageContext<T> for Result<T, E> {
    fn or_usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

pub fn require_path(path: &Path, what: &str) -> CmdResult {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::usage(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

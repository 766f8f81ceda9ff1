//! Errors carrying their process exit code.

use std::fmt;
use std::path::Path;

use biclkt_core::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_DATA: i32 = 5;
const EXIT_OTHER: i32 = 1;

#[derive(Debug)]
pub struct Fail {
    pub code: i32,
    pub message: String,
}

pub type Outcome<T> = Result<T, Fail>;

impl Fail {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Fail { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    pub fn artifact(message: impl Into<String>) -> Self {
        Self::new(EXIT_MISSING, message)
    }

    pub fn missing(stage: &str, out: &Path) -> Self {
        Self::artifact(format!("no {stage} artifacts in {}: run {stage} first", out.display()))
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(EXIT_OTHER, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_CONFIG,
            Error::Divergence { .. } | Error::NoConvergence { .. } => EXIT_DIVERGED,
            Error::Data(_) | Error::EmptyDataset(_) | Error::Split(_) | Error::Lookup { .. } | Error::UndefinedMetric(_) => EXIT_DATA,
            Error::Checkpoint(_) => EXIT_MISSING,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING,
            _ => EXIT_OTHER,
        };
        Fail::new(code, e.to_string())
    }
}

//! IO companion for the `papergrain-core` toolkit: binary file formats,
//! the directory-backed template store, CSV report emitters, and the clock
//! shim behind reproducible timestamps. The `papergrain` binary wires these
//! onto the core pipeline.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

pub mod clock;
pub mod formats;
pub mod report;
pub mod store;

/// Failure modes of the IO layer and the CLI.
///
/// Everything except `Usage` is a domain error (exit code 2); `Usage` marks
/// a structurally valid parse whose arguments cannot be acted on (exit 1).
#[derive(Debug)]
pub enum CliError {
    Io { path: PathBuf, source: io::Error },
    Core(papergrain_core::Error),
    Format { path: PathBuf, what: String },
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Format { path, what } => write!(f, "{}: {what}", path.display()),
            CliError::Usage(what) => write!(f, "{what}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Io { source, .. } => Some(source),
            CliError::Core(e) => Some(e),
            _ => None,
        }
    }
}

impl From<papergrain_core::Error> for CliError {
    fn from(e: papergrain_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, what: impl Into<String>) -> CliError {
        CliError::Format { path: path.to_path_buf(), what: what.into() }
    }

    /// Process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

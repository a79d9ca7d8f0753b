use std::path::{Path, PathBuf};

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_SAFETY: i32 = 2;
pub const EXIT_LIVENESS: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error("{}: {inner}", path.display())]
    At { path: PathBuf, inner: Box<CliError> },
}

impl CliError {
    /// Prefixes the diagnostic with the file it came from.
    pub fn at(self, path: &Path) -> CliError {
        CliError::At {
            path: path.to_path_buf(),
            inner: Box::new(self),
        }
    }
}

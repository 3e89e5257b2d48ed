use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] reslab::Error),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 ok, 1 usage or config, 2 integrity failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Core(e) if is_integrity_class(e) => 2,
            CliError::Core(_) => 1,
            CliError::Io { .. } => 3,
        }
    }
}

/// Broken identities and solver breakdowns both point at the implementation.
pub fn is_integrity_class(e: &reslab::Error) -> bool {
    e.is_integrity() || matches!(e, reslab::Error::SolverBreakdown(_))
}

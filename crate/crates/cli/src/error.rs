use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Validation(#[from] perflab::Error),

    #[error("{0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Adds a file name to a library error so the message says where it came from.
    pub fn in_file(self, path: &Path) -> Self {
        match self {
            CliError::Validation(perflab::Error::Io(source)) => CliError::io(path, source),
            CliError::Validation(e) => CliError::Parse(format!("{}: {e}", path.display())),
            other => other,
        }
    }

    /// 1 for anything wrong with the inputs, 2 for filesystem failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Validation(perflab::Error::Io(_)) => 2,
            _ => 1,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const DIVERGED: i32 = 4;
    pub const INVARIANT: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Core(#[from] bde::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Invariant(_) => exit::INVARIANT,
            CliError::Core(e) => match e {
                bde::Error::Diverged { .. } => exit::DIVERGED,
                bde::Error::Io { .. }
                | bde::Error::Parse { .. }
                | bde::Error::Format { .. }
                | bde::Error::CheckpointMismatch(_) => exit::IO,
                bde::Error::InvalidArgument(_) | bde::Error::ShapeMismatch(_) => exit::INVARIANT,
            },
        }
    }
}

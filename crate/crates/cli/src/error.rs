use std::path::PathBuf;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] metaholo_core::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

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

    pub fn format(path: impl Into<PathBuf>, reason: impl std::fmt::Display) -> Self {
        CliError::Format {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// Process exit status: config and I/O problems and divergence each get their own code.
    pub fn exit_code(&self) -> u8 {
        use metaholo_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } | CliError::Format { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) | E::InvalidInput(_) | E::ConfigConflict(_) | E::Unsupported(_) => EXIT_CONFIG,
                E::Io { .. } | E::Format { .. } => EXIT_IO,
                E::Diverged { .. } => EXIT_DIVERGED,
            },
        }
    }
}

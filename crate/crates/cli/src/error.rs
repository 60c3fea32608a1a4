use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] arce::Error),
    #[error("{}: file not found ({what})", path.display())]
    MissingInput { what: &'static str, path: PathBuf },
    #[error("missing corpus variants for {}", missing.join(", "))]
    MissingVariants { missing: Vec<String> },
    #[error("config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("line {line}: {len} tokens exceeds max_len {max_len}")]
    LineTooLong {
        line: usize,
        len: usize,
        max_len: usize,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// Stable machine-readable code printed before the message on failure.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::MissingInput { .. } => "missing_input",
            CliError::MissingVariants { .. } => "missing_variant",
            CliError::Config { .. } | CliError::Invalid(_) => "config_error",
            CliError::LineTooLong { .. } => "sequence_too_long",
            CliError::Io { .. } => "io_error",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

use thiserror::Error;

/// Errors of a CLI run, each tied to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration.
    #[error("config error: {0}")]
    Config(String),
    /// The pipeline ran but an acceptance-style check failed.
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Numerical(#[from] hmix_core::Error),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// A model or problem invariant that failed while loading configuration.
    pub fn invariant(e: hmix_core::Error) -> Self {
        Self::Config(e.to_string())
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            _ => 1,
        }
    }
}

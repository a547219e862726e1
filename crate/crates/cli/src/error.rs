use std::path::Path;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] bodyfuse::Error),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("loss became non-finite at iteration {iteration} ({detail})")]
    NonFiniteLoss { iteration: u64, detail: String },

    #[error("{0}")]
    GradCheckFailed(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::NonFiniteLoss { .. } => "non-finite-loss",
            CliError::GradCheckFailed(_) => "gradcheck-failed",
            CliError::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.display().to_string(), source }
    }
}

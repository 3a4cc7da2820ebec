use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("simulation failed: {source}{}", dump.as_ref().map(|p| format!("; state dumped to {}", p.display())).unwrap_or_default())]
    Simulation { source: phasepic_core::Error, dump: Option<PathBuf> },

    #[error("convergence study: {0}")]
    Analysis(phasepic_core::Error),
}

impl CliError {
    /// Process exit code for this failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Simulation { .. } => 4,
            CliError::Analysis(_) => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

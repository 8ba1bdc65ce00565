use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    /// A core routine rejected its input at run time.
    #[error("{stage}: {source}")]
    Invalid {
        stage: &'static str,
        source: dicke_core::Error,
    },

    #[error("{stage}: {source}")]
    NotConverged {
        stage: &'static str,
        source: dicke_core::Error,
    },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn stage(stage: &'static str) -> impl Fn(dicke_core::Error) -> CliError {
        move |source| {
            if source.is_convergence_failure() {
                CliError::NotConverged { stage, source }
            } else {
                CliError::Invalid { stage, source }
            }
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid { .. } => 2,
            CliError::NotConverged { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }
}

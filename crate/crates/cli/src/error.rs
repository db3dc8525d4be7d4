use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("policy error: {0}")]
    Policy(String),
    #[error("stream aborted at round {round}: {message} (partial report kept at {})", partial.display())]
    Partial {
        round: u64,
        message: String,
        partial: PathBuf,
    },
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Policy(_) => 4,
            CliError::Partial { .. } => 5,
            CliError::Output(_) => 1,
        }
    }

    pub(crate) fn output(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Output(format!("{}: {e}", path.display()))
    }
}

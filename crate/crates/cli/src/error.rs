use std::process::ExitCode;

use patdet_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for anything the user can fix in the configuration or input,
    /// 3 for numerical and runtime failures.
    pub fn exit_code(&self) -> ExitCode {
        let code = match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidParameter { .. } | CoreError::StepIndex(_) | CoreError::Parse { .. } => 2,
                _ => 3,
            },
            CliError::Io(_) => 3,
        };
        ExitCode::from(code)
    }
}

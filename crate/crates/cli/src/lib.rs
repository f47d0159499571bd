//! Experiment driver: configuration, run directories, checkpoints, and the
//! subcommands behind the `sil` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod rundir;

/// Process exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit status for numerical failures during a run.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sil_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(sil_core::Error::InvalidSpec(_) | sil_core::Error::InvalidArgument(_)) => EXIT_CONFIG,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

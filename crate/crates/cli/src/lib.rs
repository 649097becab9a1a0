//! Library side of the sgdg2 experiment harness. The binary in `main.rs` is
//! a thin clap wrapper over [`commands`].

pub mod commands;
pub mod config;
pub mod csvout;
pub mod svg;

use sgdg2_core::CoreError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config files or parameter combinations; exit code 2.
    Usage(String),
    Core(CoreError),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

//! Configuration, commands and output writers behind the `qgamma` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod reference;

use thiserror::Error;

pub use commands::{run, Command, Context};
pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Validation(_) => 2,
            CliError::Numerical(_) | CliError::Output(_) => 3,
        }
    }
}

macro_rules! numerical {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Numerical(e.to_string())
            }
        }
    )*};
}

numerical!(
    qgamma::kernel::KernelError,
    qgamma::maxent::MaxentError,
    qgamma::field::FieldError,
    qgamma::energy::EnergyError,
    qgamma::minimize::MinimizeError
);

impl From<qgamma::io::IoError> for CliError {
    fn from(e: qgamma::io::IoError) -> Self {
        CliError::Output(e.to_string())
    }
}

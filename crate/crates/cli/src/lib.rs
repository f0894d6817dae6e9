//! Batch front-end for protocol runs, cavity sweeps and gate simulations.

pub mod config;
pub mod emit;
pub mod run;

use thiserror::Error;

pub use config::{Command, Format, RunConfig};
pub use emit::{emit_results, write_atomic};
pub use run::{run_command, Payload, ResultEnvelope};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

//! `effcap` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input, 3 runtime failure (including an
//! unstable simulated queue).

mod args;
mod commands;
mod output;
mod params;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

/// Failure of a command, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<effcap::Error> for CliError {
    fn from(e: effcap::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let label = match e {
                CliError::Validation(_) => "invalid input",
                CliError::Runtime(_) => "error",
            };
            eprintln!("effcap: {label}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

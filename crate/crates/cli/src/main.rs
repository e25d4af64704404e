//! Command-line front end: empirical copulas, transport distances, clustering,
//! TFDC, nearest-copula queries, synthetic data and power curves.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use copula_ot::Error;

use args::Cli;

/// Anything that stops a run before its artifacts are written.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(e) => match e.root() {
                Error::ConvergenceFailure { .. } | Error::UnderflowDetected { .. } => 3,
                Error::Io { .. } => 4,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Usage(msg) => f.write_str(msg),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

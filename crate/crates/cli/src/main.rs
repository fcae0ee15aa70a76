//! `gantryflow`: generate synthetic trip logs, extract corridor cubes,
//! print statistics views and serve the HTTP API.
//!
//! Exit status is 0 on success, 1 for usage errors (bad flags, unknown
//! corridor or view, invalid config) and 2 for runtime failures such as
//! unreadable input.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::filter::LevelFilter;

use crate::args::Cli;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let default_level = match (&cli.command, cli.verbose) {
        (_, 2..) => LevelFilter::DEBUG,
        (args::Command::Serve { .. }, _) | (_, 1) => LevelFilter::INFO,
        _ => LevelFilter::WARN,
    };
    tracing_subscriber::fmt()
        .with_max_level(default_level)
        .with_writer(std::io::stderr)
        .with_ansi(false)
        .init();

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gantryflow: {e}");
            ExitCode::from(e.code())
        }
    }
}

mod args;
mod commands;
mod error;
mod manifest;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{CliError, CliResult};

const THREADS_ENV: &str = "CATLGP_THREADS";

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::InvalidFlag(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::InvalidFlag(format!("{THREADS_ENV}: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::SelectDim(a) => commands::select_dim(a),
        Command::Embed(a) => commands::embed(a),
        Command::Density(a) => commands::density(a),
        Command::Error(a) => commands::error(a),
        Command::Plot(a) => commands::plot(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

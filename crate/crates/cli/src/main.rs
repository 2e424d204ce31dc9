//! `fmradio`: command-line front end.
//!
//! Every subcommand is deterministic given its inputs and `--seed`.
//! Artifacts are never overwritten unless `--force` is passed.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Filter(a) => commands::filter(a),
        Command::Shrink(a) => commands::shrink(a),
        Command::Fa(a) => commands::fa(a),
        Command::Scores(a) => commands::scores(a),
        Command::Survfit(a) => commands::survfit(a),
        Command::Brier(a) => commands::brier(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Pipeline(a) => commands::pipeline(a),
        Command::Validate(a) => commands::validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! `canmsg`: generate or ingest CAN captures, run window sweeps, train and
//! evaluate detectors, and compare settings.
//!
//! Exit status: 0 on success (a sweep with invalid cells still succeeds),
//! 2 on a configuration or validation error, 1 on an internal error.

mod cli;
mod commands;
mod config;
mod error;
mod manifest;

use clap::Parser;

use crate::cli::Cli;

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

//! `grail`: experiment driver for gradient-imitation self-training.

mod commands;
mod config;
mod error;
mod files;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::commands::{Command, Invocation};
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "grail", version, about = "Gradient-imitation self-training for low-resource extraction")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// INI configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Run this seed only, overriding `[run] seeds`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `[run] out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = RunConfig::load(&cli.config).and_then(|config| {
        let inv = Invocation {
            seeds: cli.seed.map_or_else(|| config.seeds.clone(), |s| vec![s]),
            out: cli.out.clone().unwrap_or_else(|| config.out.clone()),
            config,
        };
        commands::run(cli.command, &inv)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("grail: {failure}");
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}

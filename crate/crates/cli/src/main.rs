use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mbidx_core::Error;

mod commands;
mod config;

use config::{Overrides, RunConfig};

/// Build and evaluate frequent-binary-pattern indexes over protected biometric templates.
#[derive(Debug, Parser)]
#[command(name = "mbidx", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic embedding dataset
    Synth,
    /// Protect every embedding of a dataset with the configured scheme
    Protect,
    /// Enrol one sample per subject into a bin table
    Index,
    /// Identify one subject's probe sample against an index
    Search {
        #[arg(long)]
        subject: u64,
        /// Number of candidates printed
        #[arg(long)]
        top: Option<usize>,
        /// Print the candidate list as JSON
        #[arg(long)]
        json: bool,
    },
    /// Run the configured closed-set and open-set experiments
    Bench,
    /// Closed-set sweep over k (and optionally t)
    Sweep {
        /// Also sweep t = 1..2^k at the configured strategy and k
        #[arg(long)]
        t_sweep: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Protocol(_) | Error::Dimension(_) => 3,
        e if e.is_data_error() => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::load(&cli.overrides).and_then(|config| match cli.command {
        Command::Synth => commands::synth(&config),
        Command::Protect => commands::protect(&config),
        Command::Index => commands::index(&config),
        Command::Search { subject, top, json } => commands::search(&config, subject, top, json),
        Command::Bench => commands::bench(&config),
        Command::Sweep { t_sweep } => commands::sweep(&config, t_sweep),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mbidx: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

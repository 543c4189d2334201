//! `litr`: learn individualized treatment rules over latent health states.
//!
//! Subcommands compose into a reproducible pipeline:
//! `simulate -> train -> recommend -> evaluate`, plus `crossval` for
//! comparing against the linear-Q baseline. All randomness flows from one
//! seed; outputs are byte-identical across runs and thread counts.

mod commands;
mod config;
mod error;
mod spec;

use clap::{Parser, Subcommand};
use config::FileConfig;
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "litr",
    version,
    about = "Individualized treatment rules over latent health states"
)]
struct Cli {
    /// JSON config file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed overriding every component seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap worker threads (0 or absent: library default). Outputs are
    /// identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Simulate(commands::simulate::SimulateArgs),
    Train(commands::train::TrainArgs),
    Recommend(commands::recommend::RecommendArgs),
    Evaluate(commands::evaluate::EvaluateArgs),
    Crossval(commands::crossval::CrossvalArgs),
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let file_config = FileConfig::load(cli.config.as_deref())?;
    let threads = cli.threads.or(file_config.threads).unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(args) => commands::simulate::run(args, &file_config, cli.seed),
        Command::Train(args) => commands::train::run(args, &file_config, cli.seed),
        Command::Recommend(args) => commands::recommend::run(args, &file_config),
        Command::Evaluate(args) => commands::evaluate::run(args, &file_config),
        Command::Crossval(args) => commands::crossval::run(args, &file_config, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

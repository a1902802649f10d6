//! `aqicast` — next-day air-quality index forecasting over the daily world
//! weather export.
//!
//! Seven subcommands compose through the output directory; see each
//! module under `commands` for the artifacts it reads and writes. Paths of
//! written files go to stdout, progress and errors to stderr. Exit codes:
//! 0 success, 2 schema or configuration problem, 3 not enough usable data,
//! 4 internal numeric failure.

mod artifacts;
mod commands;
mod config;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::explain::Method;
use crate::config::{FlagOverrides, PipelineConfig};
use crate::errors::CliError;

#[derive(Parser)]
#[command(
    name = "aqicast",
    version,
    about = "Next-day air-quality index forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Flags {
    /// TOML config file; flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Raw weather export CSV.
    #[arg(long, global = true, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Directory all artifacts are written to [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// regression, classification, or both [default: both]
    #[arg(long, global = true, value_name = "TASK")]
    task: Option<String>,
    /// Country the projection and the local explanation focus on.
    #[arg(long, global = true, value_name = "NAME")]
    country: Option<String>,
    /// Feature to drop from the model inputs; repeatable.
    #[arg(long = "exclude-feature", global = true, value_name = "NAME")]
    exclude_feature: Vec<String>,
    /// Master seed; stage seeds derive from it unless the config pins them.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 leaves the pool at the library default.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and clean the raw export into the canonical observation table.
    Ingest,
    /// Two-cluster profile and correlation matrix of the cleaned data.
    Eda,
    /// Build the supervised datasets and fit the model roster.
    Train,
    /// Cross-validated leaderboard plus diagnostics of the winner.
    Evaluate,
    /// Permutation importance, local surrogate, and dependence sweeps.
    Explain {
        /// Produce one method instead of all three.
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Next-day outlook for one country.
    Project,
    /// Bundle every JSON artifact into one summary document.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let flags = FlagOverrides {
        input: cli.flags.input,
        out: cli.flags.out,
        task: cli.flags.task,
        country: cli.flags.country,
        exclude_features: cli.flags.exclude_feature,
        seed: cli.flags.seed,
        workers: cli.flags.workers,
    };
    let config = PipelineConfig::resolve(cli.flags.config.as_deref(), &flags)?;
    if config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))?;
    }
    match cli.command {
        Command::Ingest => commands::ingest::run(&config),
        Command::Eda => commands::eda::run(&config),
        Command::Train => commands::train::run(&config),
        Command::Evaluate => commands::evaluate::run(&config),
        Command::Explain { method } => commands::explain::run(&config, method),
        Command::Project => commands::project::run(&config),
        Command::Report => commands::report::run(&config),
    }
}

//! `herdsim` — run, replay, classify, grade and report herding experiments.
//!
//! Exit codes: 0 ok, 1 validation, 2 runtime, 3 provider.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Sequential-trading herding experiments with rule-based and LLM traders.
#[derive(Debug, Parser)]
#[command(name = "herdsim", version)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run (or resume) an experiment into a bundle directory.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Bundle directory; defaults to runs/<experiment name>.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Re-execute every completed session against its transcript.
    Replay {
        /// Bundle directory.
        bundle: PathBuf,
    },
    /// Label every decision pair of a bundle.
    Classify { bundle: PathBuf },
    /// Behavior tables, payoff statistics and price series of a classified bundle.
    Report {
        bundle: PathBuf,
        /// One row per provider/model plus an equal-weight average.
        #[arg(long)]
        by_model: bool,
        /// Split rows by prompt variant (baseline / optimal / rule).
        #[arg(long)]
        by_variant: bool,
        /// Add the human-laboratory reference columns.
        #[arg(long)]
        compare_human: bool,
    },
    /// Grade reasoning passages of a bundle.
    Grade {
        bundle: PathBuf,
        /// Provider key from the bundle's configuration; the offline
        /// keyword grader is used when omitted.
        #[arg(long)]
        grader: Option<String>,
        /// Grade at most this many passages.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Check a configuration file and list every problem found.
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: commands::Overrides,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level)).init();

    let result = match cli.command {
        Command::Run { config, out } => commands::run(&config.config, &config.overrides, out),
        Command::Replay { bundle } => commands::replay(&bundle),
        Command::Classify { bundle } => commands::classify(&bundle),
        Command::Report {
            bundle,
            by_model,
            by_variant,
            compare_human,
        } => commands::report(&bundle, by_model, by_variant, compare_human),
        Command::Grade { bundle, grader, limit } => commands::grade(&bundle, grader.as_deref(), limit),
        Command::ValidateConfig { config } => commands::validate_config(&config.config, &config.overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

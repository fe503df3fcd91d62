//! `troop`: generate data, build baselines, train and evaluate reduced
//! models from the command line.

mod args;
mod baseline;
mod evaluate;
mod generate;
mod manifest;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Exit code for invalid input or configuration.
const EXIT_INVALID: u8 = 2;
/// Exit code for numerical failures (blow-up, line search).
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "troop", version, about = "Trajectory-optimized oblique projections for model reduction")]
struct Cli {
    /// Worker threads for per-trajectory evaluation.
    #[arg(long, global = true, env = "TROOP_THREADS")]
    threads: Option<usize>,

    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate full-order impulse responses into a dataset.
    Generate(generate::GenerateArgs),
    /// Optimize a subspace pair on a dataset.
    Train(train::TrainArgs),
    /// Compare checkpoints against data or a forced response.
    Evaluate(evaluate::EvaluateArgs),
    /// Build a POD or balanced-truncation checkpoint.
    Baseline(baseline::BaselineArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    let result = match cli.command {
        Command::Generate(a) => generate::run(a),
        Command::Train(a) => train::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Baseline(a) => baseline::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e.chain().any(|cause| {
        cause.downcast_ref::<troop::Error>().is_some_and(troop::Error::is_numerical)
            || cause.downcast_ref::<troop::OptimizeFailure>().is_some_and(|f| f.error.is_numerical())
    });
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

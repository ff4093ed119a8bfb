//! Batch command-line driver for DP sparse-gradient training experiments.
//!
//! Exit codes: 0 success, 1 internal invariant violation, 2 input error,
//! 3 privacy-accounting refusal.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use sparsedp::Error;

#[derive(Parser)]
#[command(
    name = "sparsedp",
    about = "Differentially private training with sparse gradients: preprocess corpora, run \
             training experiments, evaluate canary memorization, and print privacy budgets.",
    version
)]
struct Cli {
    /// Experiment config file (flat key = value lines).
    #[arg(short, long, global = true, default_value = "sparsedp.conf")]
    config: PathBuf,

    /// Override a config key, e.g. --set mode=dp_sgd. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build vocabulary and train/val/test sample files (optionally planting
    /// canaries) from a plain-text corpus.
    Preprocess,
    /// Train the configured mode on preprocessed artifacts; writes a
    /// checkpoint and per-epoch metrics.
    Train,
    /// Score planted canaries (or an out-of-train control set) against a
    /// checkpoint and test their ranks for uniformity.
    CanaryEval {
        /// Trained embedding checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Insertion count the canaries were planted with (defaults to the
        /// config's canary_copies).
        #[arg(long)]
        copies: Option<usize>,
        /// Evaluate fresh random phrases never inserted into the corpus.
        #[arg(long)]
        control: bool,
    },
    /// Print the accountant's budget derivation for the config, without
    /// training.
    Budget,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::AssumptionViolated(_) | Error::BudgetOutOfRange(_) => 3,
        Error::Invariant(_) => 1,
        _ => 2,
    }
}

fn run(cli: &Cli) -> sparsedp::Result<()> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    for pair in &cli.overrides {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    match &cli.command {
        Command::Preprocess => commands::cmd_preprocess(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::CanaryEval { checkpoint, copies, control } => {
            commands::cmd_canary_eval(&cfg, checkpoint, *copies, *control)
        }
        Command::Budget => commands::cmd_budget(&cfg),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("SPARSEDP_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

mod commands;
mod config;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use framemae::Error;

use crate::commands::CheckFailed;

/// Self-supervised video summarization with a masked frame-feature autoencoder.
#[derive(Debug, Parser)]
#[command(name = "framemae", version)]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set train.base_lr=1e-3`.
    /// Repeatable; later values win.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads for training and scoring. Results do not depend on it.
    #[arg(long, env = "FRAMEMAE_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an autoencoder from scratch on `paths.train_manifest`.
    Train,
    /// Continue training `paths.checkpoint` on `paths.eval_manifest`.
    Finetune,
    /// Write one importance curve per video of `paths.eval_manifest`.
    Score,
    /// Rank-correlation and F1 report for curves against annotations.
    Eval,
    /// Score and evaluate every `crossval.models` × `crossval.datasets` pair.
    Crossval,
    /// Draw random test splits over `paths.eval_manifest`.
    Splitgen,
    /// Compare backprop gradients with finite differences.
    Gradcheck,
    /// Min-max scaled ground-truth and prediction columns for plotting.
    ExportCurves,
    /// Check manifests against the feature and annotation files they name.
    Validate,
}

mod exit {
    pub const INTERNAL: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const FORMAT: u8 = 4;
    pub const IO: u8 = 5;
    pub const TRAINING: u8 = 6;
    pub const SAMPLING: u8 = 7;
    pub const SCORING: u8 = 8;
    pub const CHECKPOINT: u8 = 9;
    pub const CHECK_FAILED: u8 = 10;
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return exit::CHECK_FAILED;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Usage(_)) => exit::USAGE,
        Some(Error::Config(_)) => exit::CONFIG,
        Some(Error::Format { .. }) => exit::FORMAT,
        Some(Error::Io { .. }) => exit::IO,
        Some(Error::Training(_)) => exit::TRAINING,
        Some(Error::Sampling(_)) => exit::SAMPLING,
        Some(Error::Scoring(_)) => exit::SCORING,
        Some(Error::Checkpoint(_)) => exit::CHECKPOINT,
        None => exit::INTERNAL,
    }
}

fn category(err: &anyhow::Error) -> &'static str {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return "check failed";
    }
    err.downcast_ref::<Error>().map_or("internal", Error::category)
}

fn run(cli: &Cli) -> anyhow::Result<String> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    }
    let cfg = config::resolve(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Train => commands::train_cmd(&cfg),
        Command::Finetune => commands::finetune_cmd(&cfg),
        Command::Score => commands::score_cmd(&cfg),
        Command::Eval => commands::eval_cmd(&cfg),
        Command::Crossval => commands::crossval_cmd(&cfg),
        Command::Splitgen => commands::splitgen_cmd(&cfg),
        Command::Gradcheck => commands::gradcheck_cmd(&cfg),
        Command::ExportCurves => commands::export_curves_cmd(&cfg),
        Command::Validate => commands::validate_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(config::help_text()).get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error ({}): {err:#}", category(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}

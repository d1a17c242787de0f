//! Command-line front end for `autonlu-core`.
//!
//! Every subcommand reads one JSON config (see [`config::Config`]); flags
//! override config values and `--seed` applies to every stage.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::Config;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "autonlu", version, about = "Data-aware training, diagnosis and benchmarking for NLU models")]
pub struct Cli {
    /// Seed for every stochastic stage; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a bundle plus metrics.
    Train(TrainArgs),
    /// Predict with a saved bundle, one JSON object per input line.
    Predict(PredictArgs),
    /// Run data-quality evaluators and write their artifacts.
    Diagnose(DiagnoseArgs),
    /// Build an OOD benchmark, train on it and report.
    Bench(BenchArgs),
    /// Generate a synthetic labeled test set and compare it to real data.
    GenTest(GenTestArgs),
    /// Upsample small classes and write the augmented corpus.
    Augment(AugmentArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// JSON config file.
    #[arg(short, long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Output directory for `model/` and `metrics.json`.
    #[arg(short, long, default_value = "autonlu-out")]
    pub out: PathBuf,
    /// Print the regime decision and exit.
    #[arg(long)]
    pub dry_run: bool,
    /// Overrides `method.name`.
    #[arg(long)]
    pub method: Option<String>,
    /// Overrides `ood.ood_method`.
    #[arg(long)]
    pub ood_method: Option<String>,
    /// Overrides `ood.threshold_factor`.
    #[arg(long)]
    pub threshold_factor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Bundle directory written by `train`.
    #[arg(short, long)]
    pub bundle: PathBuf,
    /// Input file with one text per line; stdin when omitted.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Initial inference batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(short, long, default_value = "autonlu-diagnose")]
    pub out: PathBuf,
    /// Comma-separated evaluators; defaults to the config or the task defaults.
    #[arg(long, value_delimiter = ',')]
    pub evaluators: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(short, long, default_value = "autonlu-bench")]
    pub out: PathBuf,
    /// Rebuild the benchmark from a saved manifest instead of sampling.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenTestArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(short, long, default_value = "autonlu-gen")]
    pub out: PathBuf,
    /// Overrides `llm.per_class`.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Overrides `llm.transport` (`mock` or `http`).
    #[arg(long)]
    pub transport: Option<String>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Output JSONL file.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Classes below this size are upsampled to it.
    #[arg(long)]
    pub target: Option<usize>,
    /// Use paraphrase generation instead of perturbations.
    #[arg(long)]
    pub llm: bool,
}

/// Runs a parsed command, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Train(a) => commands::train(&a, seed, out),
        Command::Predict(a) => commands::predict(&a, out),
        Command::Diagnose(a) => commands::diagnose(&a, seed, out),
        Command::Bench(a) => commands::bench(&a, seed, out),
        Command::GenTest(a) => commands::gen_test(&a, seed, out),
        Command::Augment(a) => commands::augment(&a, seed, out),
    }
}

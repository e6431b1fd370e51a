//! `prunekit`: train, attribute, prune, sweep, eval and report from one
//! JSON run configuration.

mod commands;
mod config;
mod fail;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prunekit_core::harness::ScoreMethod;
use prunekit_core::{Scope, Strategy};

#[derive(Parser, Debug)]
#[command(name = "prunekit", version, about = "Attribution-guided neuron pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Train a network; writes model.nnck and metrics.csv, prints digest=<hex>.
    Train,
    /// Select samples and score every prunable unit; writes scores.json.
    Attribute,
    /// Mask the lowest-scoring units; writes mask.json and pruned.nnck.
    Prune,
    /// Run the method × sampling × rate × seed grid; writes sweep.csv/json.
    Sweep,
    /// Test-split accuracy of a checkpoint; prints accuracy=<float>.
    Eval,
    /// Rewrite CSV and plot files from a sweep.json and print the summary.
    Report,
}

/// Flags override the config file, which overrides built-in defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for training, sampling and random scores; a single sweep seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Pruning rate in [0, 1].
    #[arg(long, global = true)]
    pub rate: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long, global = true, value_enum)]
    pub sampling: Option<SamplingArg>,
    #[arg(long, global = true, value_enum)]
    pub scope: Option<ScopeArg>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker thread cap. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Input checkpoint (default: <out>/model.nnck).
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Score table for `prune` (default: <out>/scores.json).
    #[arg(long, global = true)]
    pub scores: Option<PathBuf>,
    /// Mask applied by `eval` instead of the checkpoint's own.
    #[arg(long, global = true)]
    pub mask: Option<PathBuf>,
    /// Sweep report for `report` (default: <out>/sweep.json).
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum MethodArg {
    Lrp,
    Ig,
    Dlb,
    Magnitude,
    Random,
}

impl From<MethodArg> for ScoreMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lrp => ScoreMethod::Lrp,
            MethodArg::Ig => ScoreMethod::Ig,
            MethodArg::Dlb => ScoreMethod::Dlb,
            MethodArg::Magnitude => ScoreMethod::Magnitude,
            MethodArg::Random => ScoreMethod::Random,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum SamplingArg {
    Confidence,
    Random,
    Clustering,
}

impl From<SamplingArg> for Strategy {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Confidence => Strategy::Confidence,
            SamplingArg::Random => Strategy::Random,
            SamplingArg::Clustering => Strategy::Clustering,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ScopeArg {
    PerLayer,
    Global,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::PerLayer => Scope::PerLayer,
            ScopeArg::Global => Scope::Global,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    // clap exits with 2 on usage errors, matching the config-error code
    let cli = Cli::parse();
    if let Some(n) = cli.flags.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: --threads must be a positive integer");
            return ExitCode::from(fail::Code::Config as u8);
        }
    }
    let result = match cli.command {
        Command::Train => commands::train(&cli.flags),
        Command::Attribute => commands::attribute(&cli.flags),
        Command::Prune => commands::prune(&cli.flags),
        Command::Sweep => commands::sweep(&cli.flags),
        Command::Eval => commands::eval(&cli.flags),
        Command::Report => commands::report(&cli.flags),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}

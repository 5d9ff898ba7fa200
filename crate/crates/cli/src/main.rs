//! `coco-forge`: find, score and edit contrastive neurons in small
//! decoder-only transformers.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coco_core::harness::KSpec;
use coco_core::scoring::{Selector, SimilarityConvention};
use coco_core::Error;

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "coco-forge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Write a seeded synthetic model to `<out>/model`.
    GenModel,
    /// Sweep activation responses and write C2 score tables per category.
    Score,
    /// Select neurons with `--selector` at the first τ and k and write edit plans.
    Extract,
    /// Grid-search a deactivation plan on dev and report EA on test.
    Deactivate,
    /// Search Δ for an enhancement plan on dev and report EA on test.
    Enhance,
    /// Intra- and cross-category grid search on dev.
    Gridsearch,
    /// Attention shift of the `--plan` edit over the scenario prompts.
    AttnShift,
    /// Summarise an experiment report.
    Report,
}

/// Flags shared by every command. Each mirrors a key of the `--config` file.
#[derive(Debug, Default, Args)]
pub struct Flags {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Model directory.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Bias scenario file (JSONL).
    #[arg(long, global = true)]
    pub scenarios: Option<PathBuf>,
    /// Capability scenario file (JSONL); repeatable.
    #[arg(long, global = true)]
    pub capability: Vec<PathBuf>,
    /// Edit plan to apply instead of searching for one.
    #[arg(long, global = true)]
    pub plan: Option<PathBuf>,
    /// Report JSON for the `report` command.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Temperature grid.
    #[arg(long, global = true, value_delimiter = ',')]
    pub tau: Vec<f64>,
    /// Neuron-count grid: integers are counts, decimals are fractions of all neurons.
    #[arg(long, global = true, value_delimiter = ',')]
    pub k: Vec<KSpec>,
    /// Scaling-factor grid for enhancement.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub delta: Vec<f64>,
    /// coco, rand, norm, mact, le or ne.
    #[arg(long, global = true)]
    pub selector: Option<Selector>,
    /// neg-abs or literal-abs.
    #[arg(long, global = true, value_parser = parse_similarity)]
    pub similarity: Option<SimilarityConvention>,
    /// Disparity threshold for le and ne.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Dispersion cap for mact.
    #[arg(long, global = true)]
    pub dispersion_cap: Option<f64>,
    /// Score options by mean instead of summed token log-probability.
    #[arg(long, global = true)]
    pub length_normalized: bool,
    /// Number of heads kept in attention-shift detail.
    #[arg(long, global = true)]
    pub top_heads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "COCO_FORGE_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub layers: Option<usize>,
    #[arg(long, global = true)]
    pub heads: Option<usize>,
    #[arg(long, global = true)]
    pub dmodel: Option<usize>,
    #[arg(long, global = true)]
    pub vocab: Option<usize>,
    #[arg(long, global = true)]
    pub max_seq: Option<usize>,
}

fn parse_similarity(s: &str) -> Result<SimilarityConvention, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown similarity {s:?} (expected neg-abs or literal-abs)"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Partition(_) | Error::EmptySelection(_) => 4,
        Error::Shape(_)
        | Error::Input(_)
        | Error::Address(_)
        | Error::Format { .. }
        | Error::Data(_)
        | Error::Plan(_)
        | Error::Stale(_)
        | Error::Io { .. } => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = RunConfig::resolve(&cli.flags).and_then(|cfg| commands::run(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("coco-forge: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

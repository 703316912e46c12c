use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patchgen_core::embedding::DEFAULT_GRID;
use patchgen_core::retrieval::{Mode, DEFAULT_EPS_SSD, DEFAULT_EPS_SSL, DEFAULT_R_LOC, DEFAULT_WINDOW};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "patchgen", version, about = "Training-free patch-retrieval image generator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate samples with full provenance traces.
    Generate(GenerateArgs),
    /// Recompute entropy metrics from run directories and compare modes.
    Metrics(MetricsArgs),
    /// Run the retrieval oracle and overlap consistency suites.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Mnist,
    Cifar10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: patchgen_core::Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Re-run the single sample described by a manifest.json.
    #[arg(long, conflicts_with_all = [
        "dataset", "split", "embeddings", "builtin_embedding_grid", "mode", "class", "window", "sigma",
        "eps_ssd", "eps_ssl", "r_loc", "corpus_size", "corpus_seed", "count", "seed", "scale", "no_hold_out",
    ])]
    pub manifest: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Dataset::Mnist)]
    pub dataset: Dataset,
    /// Directory with the dataset files; overrides the manifest's when re-running.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Train)]
    pub split: Split,
    /// PEM1 embedding file; the built-in grid embedding is used otherwise.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub builtin_embedding_grid: usize,
    #[arg(long, value_parser = parse_mode, default_value = "ns_ssd_ssl")]
    pub mode: Mode,
    /// Target class for class_conditional; defaults to the seed image's class.
    #[arg(long)]
    pub class: Option<u8>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Gaussian sigma in pixels; defaults to window / 6.4.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPS_SSD)]
    pub eps_ssd: f64,
    #[arg(long, default_value_t = DEFAULT_EPS_SSL)]
    pub eps_ssl: f64,
    #[arg(long, default_value_t = DEFAULT_R_LOC)]
    pub r_loc: usize,
    /// Seeded random subset of the split; all images when omitted.
    #[arg(long)]
    pub corpus_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub corpus_seed: u64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Master seed; sample i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Upscaling factor of the rendered maps.
    #[arg(long, default_value_t = 8)]
    pub scale: usize,
    /// Let retrieval draw from the seed's own source image.
    #[arg(long)]
    pub no_hold_out: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    /// Sample directories, or batch directories containing them.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Where to write metrics.txt and metrics.kv; stdout only when omitted.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = patchgen_core::validate::DEFAULT_QUERIES_PER_MODE)]
    pub queries_per_mode: usize,
    #[arg(long, default_value_t = patchgen_core::validate::DEFAULT_OVERLAP_RUNS)]
    pub overlap_runs: usize,
}

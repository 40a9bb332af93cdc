//! `aadit` — operator CLI for adversarial domain-invariant training.
//!
//! Subcommands: `gen-data`, `train`, `eval`, `gradcheck`,
//! `export-attention`. Exit codes are a stable contract: 0 success,
//! 2 config error, 3 I/O error, 4 numerical abort, 5 gradient-check
//! failure.

mod commands;
mod config;

use std::error::Error as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aadit_core::Result;

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "aadit", version, about = "Adversarial domain-invariant training on synthetic multi-domain sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct CommonArgs {
    /// key=value config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for data generation, training and probing.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for checkpoints, metrics and heatmaps.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel evaluation paths.
    #[arg(long)]
    jobs: Option<usize>,
    /// Dataset file path.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
struct GenDataArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Domain count |U|.
    #[arg(long)]
    domains: Option<usize>,
    /// Class count |S| (class 0 is silence).
    #[arg(long)]
    classes: Option<usize>,
    /// Frames per sequence T.
    #[arg(long)]
    frames: Option<usize>,
    /// Training sequences per domain.
    #[arg(long)]
    seqs_per_domain: Option<usize>,
    /// Test sequences per domain.
    #[arg(long)]
    test_seqs_per_domain: Option<usize>,
    /// Frame dimension r_x.
    #[arg(long)]
    input_dim: Option<usize>,
    /// Isotropic noise sigma.
    #[arg(long)]
    sigma: Option<f64>,
    /// Domain offset norm delta.
    #[arg(long)]
    delta: Option<f64>,
    /// Per-class susceptibility, comma-separated.
    #[arg(long)]
    susceptibility: Option<String>,
}

#[derive(Debug, Args, Default)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// baseline, adit or aadit.
    #[arg(long)]
    mode: Option<String>,
    /// Reversal weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Learning rate.
    #[arg(long)]
    mu: Option<f64>,
    /// Feature extractor depth P.
    #[arg(long)]
    split_depth: Option<usize>,
    /// Symmetric attention context length L (R = L).
    #[arg(long)]
    window: Option<usize>,
    /// Key/query dimension r_a.
    #[arg(long)]
    ra: Option<usize>,
    /// Attention heads H.
    #[arg(long)]
    heads: Option<usize>,
    /// dot or additive.
    #[arg(long)]
    score: Option<String>,
    /// Positional encoding: on or off.
    #[arg(long)]
    pos_enc: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size in sequences.
    #[arg(long)]
    batch: Option<usize>,
    /// Resume from a checkpoint (its embedded config wins).
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to evaluate; defaults to <out>/final.ckpt.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    probe_epochs: Option<usize>,
    #[arg(long)]
    probe_mu: Option<f64>,
    /// Probe hidden widths, comma-separated; empty for a linear probe.
    #[arg(long)]
    probe_hidden: Option<String>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Central-difference step. The default 1e-5 pairs with tolerance 1e-4;
    /// coarse steps >= 1e-3 pair with 1e-2.
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    /// Maximum relative error; defaults to the documented pairing for --h.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args, Default)]
struct ExportAttentionArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to export from; defaults to <out>/final.ckpt.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Sequence indices, comma-separated.
    #[arg(long, default_value = "0")]
    sequences: String,
    /// Which split the indices refer to.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain dataset file.
    GenData(GenDataArgs),
    /// Train a model and write per-step metrics plus per-epoch checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint: losses, class accuracy and the domain probe.
    Eval(EvalArgs),
    /// Check every analytic gradient against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Export attention heatmap CSVs from an aadit checkpoint.
    ExportAttention(ExportAttentionArgs),
}

fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs.max(1);
    }
    if let Some(dataset) = &common.dataset {
        cfg.dataset = dataset.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::GenData(args) => commands::gen_data(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Gradcheck(args) => commands::gradcheck(args),
        Command::ExportAttention(args) => commands::export_attention(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = err.source();
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

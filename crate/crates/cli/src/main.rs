//! `dink`: train, evaluate and inspect graph clustering models from the shell.
//!
//! Exit codes: 0 success, 2 user or input error, 3 state error (e.g. a checkpoint
//! of the wrong stage), 4 numeric divergence. Failures print one JSON error record
//! to standard error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dink_core::Error;

#[derive(Parser)]
#[command(name = "dink", version, about = "Scalable neural graph clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train, fine-tune and cluster a dataset.
    Train(Box<TrainArgs>),
    /// Score a predicted assignment file against labels.
    Eval(EvalArgs),
    /// Write a stochastic block model dataset.
    GenSbm(GenSbmArgs),
    /// Write node embeddings and assignments of a fine-tuned checkpoint.
    ExportEmbeddings(ExportArgs),
    /// Measure per-iteration fine-tuning time over a grid of batch sizes.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct DatasetArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// cora, citeseer or photo.
    #[arg(long)]
    preset: Option<String>,
    /// Flat TOML file whose keys are config field names.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds; one full run per seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    #[arg(long)]
    pretrain_lr: Option<f64>,
    #[arg(long)]
    finetune_lr: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    infer_batch_size: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Defaults to the number of label classes when labels are given.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    normalize_embeddings: Option<bool>,
    #[arg(long)]
    encoder_depth: Option<usize>,
    /// all or nearest.
    #[arg(long)]
    shrink_mode: Option<String>,
    #[arg(long)]
    freeze_projector: Option<bool>,
    #[arg(long)]
    select_best: Option<bool>,
    #[arg(long)]
    lloyd_init_iters: Option<usize>,
    #[arg(long)]
    log_every: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "dink-out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted cluster ids, one per line.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// arithmetic or geometric.
    #[arg(long, default_value = "arithmetic")]
    nmi: String,
}

#[derive(Args)]
struct GenSbmArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    #[arg(long, default_value_t = 50)]
    block_size: usize,
    #[arg(long, default_value_t = 0.3)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    #[arg(long, default_value_t = 32)]
    feature_dim: usize,
    #[arg(long, default_value_t = 3.0)]
    feature_shift: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "8192,16384")]
    nodes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048,4096")]
    batch_sizes: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    feature_dim: usize,
    #[arg(long, default_value_t = 64)]
    latent_dim: usize,
    #[arg(long, default_value_t = 8)]
    clusters: usize,
    #[arg(long, default_value_t = 3)]
    iters: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the CSV here (it always goes to standard output).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the linear-fit summary JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::State(_) => 3,
        Error::Numeric(_) => 4,
        _ => 2,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("DINK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Argument(format!(
            "DINK_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::State(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Train(a) => commands::train(*a),
        Command::Eval(a) => commands::eval(a),
        Command::GenSbm(a) => commands::gen_sbm(a),
        Command::ExportEmbeddings(a) => commands::export_embeddings(a),
        Command::Bench(a) => commands::bench(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{record}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! `attnpool` command-line entry point.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use attnpool::featurestore::ModelSize;
use attnpool::metrics::Dataset;
use attnpool::model::{PoolingMethod, DEFAULT_D_HIDDEN, DEFAULT_D_MODEL, DEFAULT_DROPOUT, DEFAULT_NUM_HEADS};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "attnpool", version, about = "Pooling heads for speech emotion recognition on frozen encoder features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a planted-saliency synthetic dataset (manifest + FEA1 files).
    GenSynthetic(GenArgs),
    /// Train on every fold but one, save the model and evaluate the held-out fold.
    Train(TrainArgs),
    /// k-fold cross-validation with per-fold and aggregate reports.
    CrossValidate(CvArgs),
    /// Cross-validation for each listed encoder layer, plus a consolidated table.
    SweepLayers(SweepArgs),
    /// Finite-difference check of every parameter gradient.
    Gradcheck(GradcheckArgs),
    /// Show published reference numbers or re-render a finished run.
    Report(ReportArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    per_class: usize,
    #[arg(long, default_value_t = 50)]
    frames: usize,
    #[arg(long, default_value_t = 32)]
    d_enc: usize,
    /// Frames per utterance carrying the class signature.
    #[arg(long, default_value_t = 2)]
    salient: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Encoder layer indices to write (each gets its own noise draw).
    #[arg(long, value_parser = parse_layers, default_value = "1")]
    layers: LayerList,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct HeadArgs {
    #[arg(long, default_value = "qkv", value_parser = parse_pooling)]
    pooling: PoolingMethod,
    #[arg(long, default_value_t = DEFAULT_NUM_HEADS)]
    heads: usize,
    #[arg(long, default_value_t = DEFAULT_D_HIDDEN)]
    d_hidden: usize,
    #[arg(long, default_value_t = DEFAULT_D_MODEL)]
    d_model: usize,
    #[arg(long, default_value_t = DEFAULT_DROPOUT)]
    dropout: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct OptimArgs {
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    peak_lr: f64,
    /// Fraction of total steps spent in linear warmup.
    #[arg(long, default_value_t = 0.1)]
    warmup: f64,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RefArgs {
    /// Attach published reference numbers for this dataset to the report.
    #[arg(long, value_parser = parse_dataset)]
    reference: Option<Dataset>,
    /// Encoder size for the reference lookup; defaults to the manifest's.
    #[arg(long, value_parser = parse_size)]
    size: Option<ModelSize>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Fold held out for evaluation.
    #[arg(long, default_value_t = 0)]
    fold: usize,
    /// Encoder layer; defaults to the first layer in the manifest.
    #[arg(long)]
    layer: Option<u32>,
    #[command(flatten)]
    head: HeadArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CvArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    layer: Option<u32>,
    #[command(flatten)]
    head: HeadArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[command(flatten)]
    reference: RefArgs,
    /// Folds trained concurrently (0 = one per core). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// `a..b` (inclusive) or a comma list such as `1,4,8`.
    #[arg(long, value_parser = parse_layers)]
    layers: LayerList,
    #[command(flatten)]
    head: HeadArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[command(flatten)]
    reference: RefArgs,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GradcheckArgs {
    /// `all` or one pooling method.
    #[arg(long, default_value = "all")]
    method: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value = "out/gradcheck")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// Finished run directory (containing confusion_fold*.csv) to re-render.
    #[arg(long, conflicts_with_all = ["dataset", "pooling"])]
    run: Option<PathBuf>,
    #[arg(long, value_parser = parse_dataset, required_unless_present = "run")]
    dataset: Option<Dataset>,
    #[arg(long, value_parser = parse_size, default_value = "small")]
    size: ModelSize,
    #[arg(long, value_parser = parse_pooling)]
    pooling: Option<PoolingMethod>,
    /// Per-layer reference instead of the headline one.
    #[arg(long)]
    layer: Option<u32>,
    #[arg(long, default_value = "out/report")]
    out: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
struct LayerList(Vec<u32>);

fn parse_layers(s: &str) -> Result<LayerList, String> {
    let s = s.trim();
    let layers: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| format!("bad layer range start {a:?}"))?;
        let b: u32 = b.trim().parse().map_err(|_| format!("bad layer range end {b:?}"))?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| x.parse().map_err(|_| format!("bad layer {x:?}")))
            .collect::<Result<_, _>>()?
    };
    if layers.is_empty() {
        return Err("layer list is empty".into());
    }
    Ok(LayerList(layers))
}

fn parse_pooling(s: &str) -> Result<PoolingMethod, String> {
    s.parse().map_err(|e: attnpool::Error| e.to_string())
}

fn parse_dataset(s: &str) -> Result<Dataset, String> {
    s.parse().map_err(|e: attnpool::Error| e.to_string())
}

fn parse_size(s: &str) -> Result<ModelSize, String> {
    s.parse().map_err(|e: attnpool::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic(a),
        Command::Train(a) => commands::train(a),
        Command::CrossValidate(a) => commands::cross_validate(a),
        Command::SweepLayers(a) => commands::sweep_layers(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "mivit", version, about = "Two-modality land-cover classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-modality scene.
    Synth(SynthArgs),
    /// Train a model and write checkpoints, metrics.csv and manifest.json.
    Train(TrainArgs),
    /// Print the resolved training configuration as JSON.
    Config(ConfigArgs),
    /// Accuracy metrics of one classifier on a split.
    Eval(EvalArgs),
    /// Per-pixel label map as plain PGM.
    Infer(InferArgs),
    /// Pearson matrices between modality features and between Z1 and Z2.
    AnalyzeRedundancy(AnalyzeArgs),
    /// Per-sample feature rows of one layer as CSV.
    ExportFeatures(ExportArgs),
    /// Finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
    /// Parameter and multiply-accumulate counts of an inference path.
    CountParams(CountArgs),
    /// Write a copy of a scene holding a single modality.
    SelectModality(SelectArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    classes: Option<usize>,
    /// Height and width in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Band counts of the two modalities, e.g. `16,1`.
    #[arg(long, value_parser = parse_bands)]
    bands: Option<(usize, usize)>,
    /// Noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
}

/// Values that override the configuration file.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    #[arg(long)]
    lambda4: Option<f64>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    val_per_class: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON configuration, or a run manifest to repeat its run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// 1 = modality-1 shallow, 2 = modality-2 shallow, 3 = fused.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    classifier: u8,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    /// Defaults to `eval_classifier{k}_{split}.json` beside the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Modality {
    Hsi,
    Lidar,
    Fused,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    modality: Modality,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// enc1, enc2, fused or vit.
    #[arg(long)]
    layer: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
}

#[derive(Args)]
struct GradcheckArgs {
    /// all, encoder, oaf, vit, iac or idf.
    #[arg(long, default_value = "all")]
    module: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CountArgs {
    /// Checkpoint whose layout is counted.
    #[arg(long, conflicts_with = "config")]
    ckpt: Option<PathBuf>,
    /// Count a fresh model built from this configuration instead.
    #[arg(long)]
    config: Option<PathBuf>,
    /// shallow1, shallow2 or fused.
    #[arg(long)]
    path: String,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    /// 1 or 2.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    modality: u8,
    #[arg(long)]
    out: PathBuf,
}

fn parse_bands(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated counts")?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

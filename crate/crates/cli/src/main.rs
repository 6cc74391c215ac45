//! `frontalize`: prepare a corpus, train, generate, evaluate and plot.
//!
//! Exit codes: 0 success, 2 invalid usage, 3 data error, 4 checkpoint error,
//! 1 anything else.

mod commands;
mod grid;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "frontalize",
    version,
    about = "Face frontalization with paired U-Net GANs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan a labelled corpus, crop faces and write a dataset manifest.
    PrepareData(PrepareArgs),
    /// Train pix2pix or pairwise generators on a prepared dataset.
    Train(TrainArgs),
    /// Frontalize side-pose images with a trained checkpoint.
    Generate(GenerateArgs),
    /// Score generated images against ground truth.
    Evaluate(EvaluateArgs),
    /// Lay out image sets side by side in a labelled comparison grid.
    Grid(GridArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Corpus root, scanned recursively.
    #[arg(long)]
    pub root: PathBuf,
    /// Output directory for `manifest.jsonl` and `images/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Smallest side-pose angle kept, in degrees.
    #[arg(long, default_value_t = 60.0)]
    pub min_angle: f64,
    /// Side-pose angles must be strictly below this.
    #[arg(long, default_value_t = 90.0)]
    pub max_angle: f64,
    /// Crop side length in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: u32,
    /// Fraction of subjects assigned to the training split.
    #[arg(long, default_value_t = 0.89)]
    pub split: f64,
    /// Seeds the subject split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pose-code table (`code = angle side` lines); defaults to Color FERET codes.
    #[arg(long)]
    pub pose_map: Option<PathBuf>,
    /// Filename regex with `subject`, `session` and `pose` groups.
    #[arg(long)]
    pub pattern: Option<String>,
    /// Face boxes, one `path x y w h confidence` line per image; center crop otherwise.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Prepared dataset directory containing `manifest.jsonl`.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for logs and `ckpt/`.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML training config; overrides `--schedule`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in schedule used when no config file is given.
    #[arg(long, default_value = "paper-pairwise", value_parser = ["paper-pairwise", "paper-pix2pix"])]
    pub schedule: String,
    /// Named loss preset, replacing the config's weights.
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides the config's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Samples per optimizer step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate for both networks.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seeds initialization, shuffling and dropout.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Save a checkpoint every this many epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Overfit smoke mode: train on only the first N samples.
    #[arg(long, value_name = "N")]
    pub overfit: Option<usize>,
    /// Continue from the latest checkpoint under `--out`.
    #[arg(long, conflicts_with = "resume_from")]
    pub resume: bool,
    /// Continue from a specific `epoch_NNN` checkpoint directory.
    #[arg(long)]
    pub resume_from: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorChoice {
    Left,
    Right,
    Auto,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// An `epoch_NNN` checkpoint directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input images or directories of images.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Output directory; each result is written as `<input stem>.png`.
    #[arg(long)]
    pub out: PathBuf,
    /// G1 for left-side inputs, G2 for right-side; auto reads the side from the manifest.
    #[arg(long, value_enum, default_value_t = GeneratorChoice::Auto)]
    pub generator: GeneratorChoice,
    /// Manifest used by `--generator auto` to look up each input's pose side.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Inputs are resized to this side length.
    #[arg(long, default_value_t = 256)]
    pub size: u32,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of generated images.
    #[arg(long)]
    pub generated: PathBuf,
    /// Directory of ground-truth images with matching file names.
    #[arg(long)]
    pub reference: PathBuf,
    /// Score only the first N matched pairs.
    #[arg(long, value_name = "N")]
    pub limit: Option<usize>,
    /// `stub` or `pretrained:<path>` to a features checkpoint.
    #[arg(long, default_value = "stub")]
    pub fid_extractor: String,
    /// `local` embedding similarity, or `remote` (endpoint and key from the environment).
    #[arg(long, default_value = "local", value_parser = ["local", "remote"])]
    pub provider: String,
    /// Concurrent provider calls.
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    /// Remote provider request rate, per second.
    #[arg(long, default_value_t = 2.0)]
    pub rate: f64,
    /// Line-delimited report output.
    #[arg(long, default_value = "report.jsonl")]
    pub report: PathBuf,
    /// Images are resized to this side length before scoring.
    #[arg(long, default_value_t = 256)]
    pub size: u32,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// `LABEL=DIR`, repeated once per column in display order.
    #[arg(long = "column", value_name = "LABEL=DIR", required = true)]
    pub columns: Vec<String>,
    /// Output PNG path.
    #[arg(long)]
    pub out: PathBuf,
    /// Cell side length in pixels.
    #[arg(long, default_value_t = 256)]
    pub cell: u32,
    /// Use only the first N rows.
    #[arg(long, value_name = "N")]
    pub limit: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::PrepareData(a) => commands::prepare_data(a),
        Command::Train(a) => commands::train(a),
        Command::Generate(a) => commands::generate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Grid(a) => commands::grid(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! bnnx command line: train, transfer, evaluate, export, and inspect
//! binary networks from the shell.
//!
//! Every run is a pure function of its flags and input files. Exit codes
//! follow one rule everywhere: 0 success, 1 usage, 2 bad data, 3 numeric
//! failure.

mod arch;
mod commands;
mod data;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bnnx::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

use bnnx::image::{PreprocessConfig, ResizeMode};
use bnnx::optim::{AdamParams, OptimKind, SgdParams};
use bnnx::train::TrainConfig;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version land here with use_stderr() == false;
            // those exit 0, real parse failures exit 1
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

/// Failures after clap is done. Usage mistakes exit 1, unreadable or
/// inconsistent data exits 2, numeric blowups exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib {
        context: Option<String>,
        source: Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib { source, .. } => match source {
                Error::Config(_) => 1,
                Error::Numeric(_) => 3,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Lib {
                context: Some(ctx),
                source,
            } => write!(f, "{ctx}: {source}"),
            CliError::Lib {
                context: None,
                source,
            } => write!(f, "{source}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(source: Error) -> Self {
        CliError::Lib {
            context: None,
            source,
        }
    }
}

/// Tags a library error with the file it came from.
pub trait Located<T> {
    fn at(self, path: &Path) -> CliResult<T>;
}

impl<T> Located<T> for Result<T, Error> {
    fn at(self, path: &Path) -> CliResult<T> {
        self.map_err(|source| CliError::Lib {
            context: Some(path.display().to_string()),
            source,
        })
    }
}

#[derive(Parser)]
#[command(
    name = "bnnx",
    version,
    about = "Binary (±1) neural networks with XNOR-popcount inference",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a binary network from scratch on an IDX dataset
    Pretrain(PretrainArgs),
    /// Retrain the classifier head of a saved model; the extractor stays frozen
    Finetune(FinetuneArgs),
    /// Score a labeled dataset, or classify a single netpbm image
    Evaluate(EvaluateArgs),
    /// Run the frozen extractor over a dataset and save the feature cache
    Features(FeaturesArgs),
    /// Export the extractor half of a model as a blob + manifest bundle
    Export(ExportArgs),
    /// Print the layer table and storage cost of a saved model
    Inspect(InspectArgs),
}

#[derive(Args)]
pub struct DataArgs {
    /// IDX image file (u8 payload)
    #[arg(long)]
    pub images: PathBuf,
    /// IDX label file (u8 payload)
    #[arg(long)]
    pub labels: PathBuf,
    /// Class count; inferred as max label + 1 when omitted
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Args)]
pub struct PreprocessArgs {
    /// Resize so the chosen side equals SIZE before cropping
    #[arg(long, value_name = "SIZE", requires = "crop")]
    pub resize: Option<usize>,
    /// Square crop side; random at train time, centered at eval time
    #[arg(long, value_name = "SIZE", requires = "resize")]
    pub crop: Option<usize>,
    /// Which image side --resize pins
    #[arg(long, value_enum, default_value_t = SideArg::Longest)]
    pub resize_side: SideArg,
}

impl PreprocessArgs {
    /// None when the flags are absent; clap enforces the pairing.
    pub fn build(&self, eval_only: bool) -> CliResult<Option<PreprocessConfig>> {
        let (resize, crop) = match (self.resize, self.crop) {
            (Some(r), Some(c)) => (r, c),
            _ => return Ok(None),
        };
        let cfg = PreprocessConfig::new(resize, crop)
            .map_err(|e| CliError::usage(format!("--resize/--crop: {e}")))?
            .with_resize_mode(match self.resize_side {
                SideArg::Longest => ResizeMode::Longest,
                SideArg::Shortest => ResizeMode::Shortest,
            });
        Ok(Some(if eval_only { cfg.eval_only() } else { cfg }))
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training epochs
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Seed for weight init, shuffling, and crop jitter
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OptArg::Adam)]
    pub optimizer: OptArg,
    /// Learning-rate override (each optimizer has its own default)
    #[arg(long)]
    pub lr: Option<f32>,
    /// Skip clipping binary latents to [-1, 1] after each step
    #[arg(long)]
    pub no_clip: bool,
}

impl TrainArgs {
    pub fn to_config(&self) -> CliResult<TrainConfig> {
        if self.epochs == 0 {
            return Err(CliError::usage("--epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(CliError::usage("--batch-size must be at least 1"));
        }
        if let Some(lr) = self.lr {
            if !lr.is_finite() || lr <= 0.0 {
                return Err(CliError::usage("--lr must be a positive finite number"));
            }
        }
        let optimizer = match self.optimizer {
            OptArg::Adam => OptimKind::Adam(AdamParams::default()),
            OptArg::Sgd => OptimKind::Sgd(SgdParams::default()),
        };
        let optimizer = match self.lr {
            Some(lr) => optimizer.with_lr(lr),
            None => optimizer,
        };
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            optimizer,
            clip_binary_weights: !self.no_clip,
        })
    }
}

#[derive(Args)]
pub struct PretrainArgs {
    /// Architecture string; the grammar is documented in the README
    #[arg(long)]
    pub arch: String,
    #[command(flatten)]
    pub data: DataArgs,
    /// Held-out images evaluated after every epoch
    #[arg(long, requires = "val_labels")]
    pub val_images: Option<PathBuf>,
    #[arg(long, requires = "val_images")]
    pub val_labels: Option<PathBuf>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Where to write the trained model
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch metrics as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Overwrite existing output files
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct FinetuneArgs {
    /// Saved model whose head gets retrained; this file is never rewritten
    #[arg(long)]
    pub model: PathBuf,
    /// Extractor/head boundary; defaults to just before the last layer
    #[arg(long)]
    pub split_index: Option<usize>,
    /// Parameterization of the retrained head
    #[arg(long, value_enum, default_value_t = HeadArg::Float)]
    pub head: HeadArg,
    /// Feature cache from `bnnx features` (alternative to --images/--labels)
    #[arg(long, conflicts_with_all = ["images", "labels", "classes"])]
    pub features: Option<PathBuf>,
    #[arg(long, requires = "labels")]
    pub images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Held-out images pushed through the extractor for per-epoch scoring
    #[arg(long, requires = "val_labels")]
    pub val_images: Option<PathBuf>,
    #[arg(long, requires = "val_images")]
    pub val_labels: Option<PathBuf>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Where to write the retrained head
    #[arg(long)]
    pub head_out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Saved full model
    #[arg(long, conflicts_with_all = ["bundle", "head"])]
    pub model: Option<PathBuf>,
    /// Extractor bundle stem (the part before .bnnx/.manifest)
    #[arg(long, requires = "head")]
    pub bundle: Option<PathBuf>,
    /// Head model stacked on the bundle's extractor
    #[arg(long, requires = "bundle")]
    pub head: Option<PathBuf>,
    /// IDX images to score (pairs with --labels)
    #[arg(long, requires = "labels", conflicts_with = "image")]
    pub images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// Single netpbm image (P2/P3/P5/P6) to classify
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
}

#[derive(Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Extractor/head boundary; defaults to just before the last layer
    #[arg(long)]
    pub split_index: Option<usize>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Output feature cache (.bnnf)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Extractor/head boundary; defaults to just before the last layer
    #[arg(long)]
    pub split_index: Option<usize>,
    /// Output stem; writes STEM.bnnx and STEM.manifest
    #[arg(long)]
    pub stem: PathBuf,
    /// Fold batch norms into sign-preserving shift norms before export
    #[arg(long)]
    pub fold_shifts: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum OptArg {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum HeadArg {
    Binary,
    Float,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SideArg {
    Longest,
    Shortest,
}

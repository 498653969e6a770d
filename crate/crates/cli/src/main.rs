//! `msdnn`: train, run and evaluate the multi-scale saliency network.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

mod commands;
mod record;
mod svg;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "msdnn", version, about = "Multi-scale recurrent saliency network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network and write the loss log and checkpoints.
    Train(TrainArgs),
    /// Write saliency maps for input images.
    Predict(PredictArgs),
    /// Score predicted maps against ground-truth masks.
    Eval(EvalArgs),
    /// Run the finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
    /// Train and compare the four scale configurations.
    Ablate(AblateArgs),
    /// Write a synthetic dataset as PPM/PGM files with a manifest.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Default)]
pub struct NetworkArgs {
    /// Network input size (multiple of 16).
    #[arg(long)]
    pub size: Option<usize>,
    /// Channel width multiplier.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Recurrent unfolding depth T.
    #[arg(long)]
    pub timesteps: Option<usize>,
    /// Enabled saliency heads, e.g. `4,3,2,1`.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<usize>>,
    /// Weight of the per-head losses.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct OptimArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint every N iterations (0 disables; final.msdnn is always written).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Heads-only iterations before joint training.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Stop once the final-map loss drops below this value.
    #[arg(long)]
    pub target_loss: Option<f64>,
    /// Multiply the learning rate by --lr-gamma every N iterations.
    #[arg(long, requires = "lr_gamma")]
    pub lr_step_every: Option<usize>,
    #[arg(long, requires = "lr_step_every")]
    pub lr_gamma: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct DataArgs {
    /// Train on N generated samples (seeded by --seed).
    #[arg(long, conflicts_with = "manifest")]
    pub synthetic: Option<usize>,
    /// Train on the samples listed in a manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Re-run from a config.json written by an earlier run (flags override it).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Log progress every N iterations.
    #[arg(long, default_value_t = 50)]
    pub log_every: usize,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Input images or directories of .ppm/.pgm files.
    #[arg(long = "input", num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Also write the per-scale maps Sm1..Sm4.
    #[arg(long)]
    pub all_scales: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of predicted maps named `<id>.pgm`.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth masks named `<id>.pgm`.
    #[arg(long, conflicts_with = "manifest")]
    pub gt: Option<PathBuf>,
    /// Manifest whose masks and ids are the ground truth.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub beta_squared: Option<f64>,
    /// Also draw the P-R curve as SVG.
    #[arg(long)]
    pub svg: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F64,
    F32,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        })
    }
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Checks to run (default: all), e.g. `rcl,conv2d,network`.
    #[arg(long, value_delimiter = ',')]
    pub kernels: Option<Vec<String>>,
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub network_tolerance: Option<f64>,
    /// Only double precision is supported.
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write config.json and gradcheck.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Evaluate on N generated samples (seeded by --seed + 1).
    #[arg(long, conflicts_with = "eval_manifest")]
    pub eval_synthetic: Option<usize>,
    #[arg(long)]
    pub eval_manifest: Option<PathBuf>,
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Bad flag combinations or values: exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("MSDNN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("MSDNN_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Synth(a) => commands::synth(a),
    });
    match result {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

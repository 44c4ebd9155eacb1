mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use bcos::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "bcos", version, about = "Train, explain and evaluate B-cos networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write model.bcos, metrics.log and manifest.txt.
    Train(TrainArgs),
    /// Accuracy and loss of a checkpoint on the held-out split.
    Eval(EvalArgs),
    /// Explain one output of a checkpoint on one image.
    Explain(ExplainArgs),
    /// Score attribution methods on the grid pointing game.
    Pointing(PointingArgs),
    /// Print the architecture of a checkpoint or config.
    Inspect(InspectArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dataset {
    Synth,
    Cifar10,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    SynthCnn,
    MaxoutCnn,
    ResidualCnn,
    TinyVit,
    CifarPlain,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Layer config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model checkpoint (read only).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "bcos-out")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Dataset::Synth)]
    pub dataset: Dataset,
    /// Directory holding the CIFAR-10 binary batches.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Seed of the synthetic dataset; the held-out split uses seed + 1.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Synthetic training images per class.
    #[arg(long, default_value_t = 100)]
    pub train_per_class: usize,
    /// Synthetic held-out images per class.
    #[arg(long, default_value_t = 100)]
    pub test_per_class: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ArchArgs {
    /// Built-in architecture, used when neither --config nor --checkpoint is given.
    #[arg(long, value_enum, default_value_t = Preset::SynthCnn)]
    pub preset: Preset,
    /// Alignment exponent of the preset.
    #[arg(long, default_value_t = 2.0)]
    pub b: f32,
    /// Input side length of the preset.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Norm kind of the residual preset.
    #[arg(long, default_value = "batch")]
    pub norm: String,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    #[arg(long, default_value_t = 1e-5)]
    pub lr_end: f32,
    #[arg(long, default_value_t = 10)]
    pub warmup_steps: usize,
    /// Global gradient norm ceiling; 0 disables clipping.
    #[arg(long, default_value_t = 1.0)]
    pub clip_norm: f32,
    /// one_hot or soft_non_target.
    #[arg(long, default_value = "one_hot")]
    pub target: String,
    /// Random flips and padded crops.
    #[arg(long)]
    pub augment: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutFormat {
    Png,
    Ppm,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: Common,
    /// RGB image (PNG or binary PPM).
    #[arg(long)]
    pub image: PathBuf,
    /// Class to explain; defaults to the predicted class.
    #[arg(long, conflicts_with_all = ["layer", "neuron"])]
    pub class: Option<usize>,
    /// Layer whose output unit --neuron is explained (0-based).
    #[arg(long, requires = "neuron")]
    pub layer: Option<usize>,
    /// Flat index of the unit within --layer's output.
    #[arg(long, requires = "layer")]
    pub neuron: Option<usize>,
    #[arg(long, default_value = "inherent")]
    pub method: String,
    /// Explain the class row minus the mean row over classes.
    #[arg(long)]
    pub mean_corrected: bool,
    #[arg(long, value_enum, default_value_t = OutFormat::Png)]
    pub format: OutFormat,
}

#[derive(Args, Debug)]
pub struct PointingArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 100)]
    pub grids: usize,
    #[arg(long, default_value_t = 2)]
    pub grid_size: usize,
    /// Comma-separated attribution methods.
    #[arg(long, value_delimiter = ',', default_value = "inherent,grad,ixg,intgrad")]
    pub methods: Vec<String>,
    /// Also score each method on its top fraction of pixels.
    #[arg(long)]
    pub top_n: Option<f64>,
    /// Explain cell-sized windows instead of the whole grid.
    #[arg(long)]
    pub sliding_window: bool,
    /// Score the raw maps without the 3x3 smoothing.
    #[arg(long)]
    pub no_smoothing: bool,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub arch: ArchArgs,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Layer { .. } | Error::ManifestMismatch(_) => 2,
        Error::Diverged { .. } => 3,
        Error::InvalidNeuron(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let res = match &cli.command {
        Command::Train(a) => commands::train(a, &argv),
        Command::Eval(a) => commands::eval(a, &argv),
        Command::Explain(a) => commands::explain(a, &argv),
        Command::Pointing(a) => commands::pointing(a, &argv),
        Command::Inspect(a) => commands::inspect(a, &argv),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

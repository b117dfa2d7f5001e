use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Train small classifiers and measure their adversarial robustness.
///
/// Radii (--eps, --radius, --eps-grid) are given in 1/255 units.
#[derive(Debug, Parser)]
#[command(name = "alp-eval", version)]
pub struct Cli {
    /// Worker threads for per-example parallelism (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint plus training log.
    Train(TrainArgs),
    /// Targeted or untargeted epsilon sweep of one model.
    Sweep(SweepArgs),
    /// Loss surface around one example.
    Landscape(LandscapeArgs),
    /// Per-example PGD attacks with full loss trajectories.
    Attack(AttackArgs),
    /// Side-by-side sweeps of several models.
    Compare(CompareArgs),
    /// Clean predictions and losses of a model.
    Eval(EvalArgs),
    /// Export a dataset as CSV.
    Dataset(DatasetArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    Natural,
    Adversarial,
    Alp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Targeted,
    Untargeted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    pub fn is_on(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitPart {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// blobs, spirals, or idx:<images>,<labels>
    #[arg(long, default_value = "blobs")]
    pub dataset: String,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_per_class: usize,
    /// Input dimension of blobs.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Number of blob classes.
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.05)]
    pub spread: f64,
    /// Spiral noise.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub objective: Objective,
    #[command(flatten)]
    pub data: DataArgs,
    /// Hidden layer widths, comma separated; "none" for a linear model.
    #[arg(long, default_value = "16")]
    pub hidden: String,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Inner-attack radius in 1/255 units.
    #[arg(long, default_value_t = 16.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 10)]
    pub inner_steps: usize,
    /// Inner-attack step as a fraction of the radius.
    #[arg(long, default_value_t = 0.25)]
    pub inner_alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = Mode::Targeted)]
    pub alp_inner: Mode,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub alp_clean_loss: OnOff,
    #[arg(long, value_enum, default_value_t = OnOff::Off)]
    pub alp_adv_loss: OnOff,
    /// Use plain instead of squared Euclidean logit distance.
    #[arg(long)]
    pub alp_euclidean: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AttackFlags {
    #[arg(long, value_enum, default_value_t = Mode::Targeted)]
    pub mode: Mode,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Step size as a fraction of the radius.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Number of examples taken from the start of the split.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub random_start: bool,
    #[arg(long, default_value_t = 1e-6)]
    pub convergence_tol: f64,
    #[arg(long, default_value_t = 20)]
    pub convergence_window: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepFlags {
    /// start:end:count in 1/255 units.
    #[arg(long, default_value = "0:16:17")]
    pub eps_grid: String,
    #[command(flatten)]
    pub attack: AttackFlags,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub sweep: SweepFlags,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = SplitPart::Test)]
    pub split: SplitPart,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Two or more checkpoints, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<PathBuf>,
    #[command(flatten)]
    pub sweep: SweepFlags,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = SplitPart::Test)]
    pub split: SplitPart,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LandscapeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub example_index: usize,
    /// Half-width of the grid in 1/255 units.
    #[arg(long, default_value_t = 16.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 41)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_clip: bool,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = SplitPart::Test)]
    pub split: SplitPart,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Radius in 1/255 units.
    #[arg(long, default_value_t = 16.0)]
    pub eps: f64,
    #[command(flatten)]
    pub attack: AttackFlags,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = SplitPart::Test)]
    pub split: SplitPart,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = SplitPart::Test)]
    pub split: SplitPart,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = SplitPart::All)]
    pub split: SplitPart,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

//! `egopose`: synthetic data generation, training, evaluation and ablations
//! for stereo egocentric pose estimation.

mod commands;
mod error;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Stereo egocentric 3D pose estimation toolkit.
#[derive(Debug, Parser)]
#[command(name = "egopose", version, about, long_about = None)]
pub struct Cli {
    /// Dataset root used when a command is not given one explicitly.
    #[arg(long, global = true, env = "EGOPOSE_DATA_ROOT")]
    pub data_root: Option<PathBuf>,

    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic stereo fisheye dataset.
    Gen(GenArgs),
    /// Sample character placements for a scene.
    Spawn(SpawnArgs),
    /// Train the 2D and 3D modules.
    Train(TrainArgs),
    /// Evaluate trained checkpoints on a split.
    Eval(EvalArgs),
    /// Head and left-foot location statistics of a dataset.
    Stats(StatsArgs),
    /// Run a comparison grid over backbones, weight sharing, strategies and variants.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generation config (JSON); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generation seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (defaults to the data root).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of motion clips.
    #[arg(long)]
    pub motions: Option<usize>,
    /// Comma-separated motion categories (default: all).
    #[arg(long, value_delimiter = ',')]
    pub categories: Option<Vec<String>>,
    /// Clip duration in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Keep every n-th frame of each clip.
    #[arg(long)]
    pub frame_stride: Option<usize>,
    /// Scene file with spawn rectangles (JSON).
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpawnArgs {
    /// Scene file with spawn rectangles (JSON); default is one flat 20 m floor.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Placement seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Neighbor-region radius in cm.
    #[arg(long)]
    pub neighbor_radius: Option<f64>,
    /// Minimum horizontal distance between characters in cm.
    #[arg(long)]
    pub min_separation: Option<f64>,
    /// Mean of the Poisson group size.
    #[arg(long)]
    pub group_size_mean: Option<f64>,
    /// Number of groups to place.
    #[arg(long, default_value_t = 1)]
    pub groups: usize,
    /// Write placements here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelOverrides {
    /// Experiment file (JSON) with model and training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// separate or end2end.
    #[arg(long)]
    pub strategy: Option<String>,
    /// stereo-shared, stereo-dual or monocular.
    #[arg(long)]
    pub variant: Option<String>,
    /// Residual encoder depth: 18, 34, 50 or 101.
    #[arg(long)]
    pub backbone: Option<u32>,
    /// Share encoder weights between the two views (stereo-shared only).
    #[arg(long)]
    pub weight_sharing: Option<bool>,
    /// Number of runs with distinct seeds.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Training epochs per strategy phase (must be even).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Channel width of the first encoder stage.
    #[arg(long)]
    pub base_width: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelOverrides,
    /// Output directory for checkpoints and reports.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Training output directory (holds experiment.json and seed_* checkpoints).
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Experiment file; checkpoints built from a different config are refused.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Split to evaluate: train, val or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Print one row per motion category.
    #[arg(long)]
    pub by_category: bool,
    /// Score ground truth against itself (no checkpoints needed).
    #[arg(long)]
    pub oracle: bool,
    /// Evaluate at most this many evenly spaced frames.
    #[arg(long)]
    pub max_frames: Option<usize>,
    /// Where to write eval reports (defaults to the run directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Split to summarize, or "all".
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Directory for the report and scatter plots.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub model: ModelOverrides,
    /// Grid file (JSON); list flags override its fields.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Comma-separated encoder depths, e.g. 18,50.
    #[arg(long, value_delimiter = ',')]
    pub backbones: Option<Vec<u32>>,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    /// Comma-separated weight-sharing settings, e.g. true,false.
    #[arg(long, value_delimiter = ',')]
    pub sharing: Option<Vec<bool>>,
    /// Output directory for per-cell runs and the comparison table.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("egopose: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use pointnet_kan::config::{keys_help, parse_override, RunConfig};
use pointnet_kan::Error;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "pkan", version, about = "Jacobi-polynomial KAN point-cloud networks: data, training, evaluation")]
struct Cli {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Seed for every random choice (same as `--set run.seed=S`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap on worker threads for data and evaluation.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Build a classification dataset from a ModelNet-style tree of OFF meshes.
    ConvertOff(ConvertArgs),
    /// Build a part-segmentation dataset from a ShapeNet-part style tree.
    ConvertShapenet(ConvertArgs),
    /// Train a model; writes a checkpoint and a per-epoch CSV log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one dataset split.
    Eval(EvalArgs),
    /// Accuracy as input points are randomly dropped.
    Robustness(RobustnessArgs),
    /// Parameter and operation breakdown of the configured model.
    Count(CountArgs),
    /// Write per-sample classes or per-point labels.
    Predict(PredictArgs),
    /// Degree and Jacobi-parameter sweeps on one dataset.
    Ablate(AblateArgs),
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SynthKind {
    /// Shape classification (sphere, cube, cylinder, torus by default).
    Shapes,
    /// Two-part mug segmentation.
    Mug,
    /// Room scans cut into blocks, labeled floor / wall / table.
    Scene,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "shapes")]
    kind: SynthKind,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated shape names for `shapes`.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    /// Training clouds per class (rooms for `scene`).
    #[arg(long, default_value_t = 200)]
    train: usize,
    /// Test clouds per class (rooms for `scene`).
    #[arg(long, default_value_t = 50)]
    test: usize,
    /// Points per cloud (per block for `scene`).
    #[arg(long, default_value_t = 256)]
    points: usize,
    /// Append unit normals as features 4..6.
    #[arg(long)]
    normals: bool,
    #[arg(long)]
    no_rotate: bool,
    /// Scene points per square metre.
    #[arg(long, default_value_t = 400.0)]
    density: f64,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// Source tree root.
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1024)]
    points: usize,
    #[arg(long)]
    normals: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory (overrides `data.dataset`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Checkpoint to write (overrides `data.checkpoint`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// CSV log to write (overrides `data.log`).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Part segmentation: argmax over all parts instead of the category's.
    #[arg(long)]
    unrestricted: bool,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

#[derive(Args, Debug)]
struct RobustnessArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Points kept per cloud.
    #[arg(long, value_delimiter = ',', default_value = "1024,512,256,128")]
    keeps: Vec<usize>,
    /// Also write the table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CountArgs {
    /// Points per cloud for the operation estimate.
    #[arg(long, default_value_t = 1024)]
    points: usize,
    /// Count a checkpoint's model instead of the configured one.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Output file, one line per sample.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Degree sweep `lo..hi` at the configured α, β.
    #[arg(long, value_parser = parse_range)]
    degrees: Option<(usize, usize)>,
    /// Sweep the six standard (α, β) settings at the configured degree.
    #[arg(long)]
    alpha_beta: bool,
    #[arg(long, default_value = "test")]
    split: String,
    /// Also write the table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or("expected lo..hi")?;
    let lo: usize = a.trim().parse().map_err(|_| format!("bad bound '{a}'"))?;
    let hi: usize = b.trim_start_matches('=').trim().parse().map_err(|_| format!("bad bound '{b}'"))?;
    if lo > hi {
        return Err(format!("empty range {s}"));
    }
    Ok((lo, hi))
}

impl Cli {
    fn run_config(&self) -> pointnet_kan::Result<RunConfig> {
        let mut overrides = self.set.iter().map(|s| parse_override(s)).collect::<pointnet_kan::Result<Vec<_>>>()?;
        if let Some(seed) = self.seed {
            overrides.push(("run.seed".into(), seed.to_string()));
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        "config" => 2,
        "numeric" => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(keys_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(k) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::from(exit_code(&e))
        }
    }
}

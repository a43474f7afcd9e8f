//! `ctmap`: batch pipelines for mapping cellular trajectories onto
//! multilayer transportation graphs.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Error caused by how the tool was invoked (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Debug, Parser)]
#[command(name = "ctmap", version, about = "Map sparse cellular trajectories onto multilayer transportation graphs")]
pub struct Cli {
    /// File of `key=value` lines overriding mapper and generator parameters.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a graph, optionally link its layers, and summarise it.
    BuildGraph(BuildGraphArgs),
    /// Search-information entropy of a graph or one of its layers.
    Entropy(EntropyArgs),
    /// Map cellular trajectories onto the graph.
    Map(MapArgs),
    /// Score mapped paths against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic world and trip corpus.
    Simulate(SimulateArgs),
    /// Re-run a recorded command and check its outputs are unchanged.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GraphInput {
    #[arg(long)]
    pub nodes: PathBuf,
    #[arg(long)]
    pub edges: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[command(flatten)]
    pub graph: GraphInput,
    /// Link every station to the nearest node of each other layer within this radius (km).
    #[arg(long)]
    pub connect_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayerChoice {
    Road,
    Metro,
    Train,
    All,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub graph: GraphInput,
    #[arg(long, value_enum, default_value_t = LayerChoice::All)]
    pub layer: LayerChoice,
    /// Ordered pairs to evaluate; all pairs are used when they fit.
    #[arg(long, default_value_t = 200_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
    /// Attempted double-edge swaps per edge for the random counterpart (0 skips it).
    #[arg(long, default_value_t = 10)]
    pub swap_factor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmChoice {
    Ctmapper,
    Baseline1,
    Baseline2,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[command(flatten)]
    pub graph: GraphInput,
    #[arg(long)]
    pub towers: PathBuf,
    /// Trajectory file, or a directory whose `*.csv` files are all mapped.
    #[arg(long)]
    pub trajectories: PathBuf,
    #[arg(long, value_enum, default_value_t = AlgorithmChoice::Ctmapper)]
    pub algorithm: AlgorithmChoice,
    /// `min_lat,min_lon,max_lat,max_lon`; defaults to all nodes and towers plus 1 km.
    #[arg(long)]
    pub bbox: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub graph: GraphInput,
    /// Mapped paths to score.
    #[arg(long)]
    pub paths: PathBuf,
    /// Ground-truth node paths.
    #[arg(long, conflicts_with = "gps", required_unless_present = "gps")]
    pub truth: Option<PathBuf>,
    /// Ground-truth GPS tracks, snapped to the graph.
    #[arg(long)]
    pub gps: Option<PathBuf>,
    /// Comma-separated match radii in km.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub epsilons: String,
    /// Second set of mapped paths for a side-by-side comparison.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Column names for the comparison.
    #[arg(long, default_value = "primary,compare")]
    pub labels: String,
    /// Drop short trips first (needs `--towers`).
    #[arg(long, requires = "towers")]
    pub filter: bool,
    #[arg(long)]
    pub towers: Option<PathBuf>,
    #[arg(long)]
    pub bbox: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trips: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse_from(std::iter::once("ctmap".to_string()).chain(argv.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

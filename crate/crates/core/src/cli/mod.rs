//! Command-line surface of the `semcache` binary.
//!
//! Every subcommand writes its reports into `--out` with atomic renames and
//! prints the written paths. CSV reports are a pure function of the flags;
//! wall-clock timings go to separate JSON files.

mod commands;
pub mod report;
pub mod seeds;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::model::DistanceMetric;
use crate::online::{Algorithm, ConfidenceVariant};
use crate::solvers::DEFAULT_BRUTE_FORCE_BUDGET;
use crate::workload::{Arrival, DEFAULT_NOISE_SIGMA};

pub use report::{mean_std, AggregateReport, AggregateRow, Format};
pub use seeds::derive_seed;

#[derive(Debug, Parser)]
#[command(
    name = "semcache",
    version,
    about = "Semantic cache optimization experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic clustered workload file.
    GenWorkload(GenWorkloadArgs),
    /// Compare reverse greedy, brute force and LFU across cache sizes.
    Solve(SolveArgs),
    /// Suboptimality of offline learners against the dataset size.
    Offline(OfflineArgs),
    /// Average regret curves of the online learners.
    Online(OnlineArgs),
    /// Final average regret as a function of k or m.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct GeneratorArgs {
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long = "d-e", default_value_t = 384)]
    pub d_e: usize,
    #[arg(long, default_value_t = 5)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub spread: f64,
    /// `uniform` or `zipf:<exponent>`.
    #[arg(long, default_value = "uniform", value_parser = parse_arrival)]
    pub arrival: Arrival,
    /// `euclidean`, `cosine` or `threshold:<epsilon>`.
    #[arg(long, default_value = "euclidean", value_parser = parse_metric)]
    pub metric: DistanceMetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct GenWorkloadArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long, default_value_t = DEFAULT_NOISE_SIGMA, allow_negative_numbers = true)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Intended cache size, checked against m when `--k-check on`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub k_check: Switch,
    /// Output directory; the file is named `workload.json`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub workload: PathBuf,
    /// Single cache size; defaults to every k in 1..=m.
    #[arg(long)]
    pub k: Option<usize>,
    /// Explicit list of cache sizes.
    #[arg(long, value_delimiter = ',', conflicts_with = "k")]
    pub ks: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_BRUTE_FORCE_BUDGET)]
    pub budget: u128,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ValueEnum)]
pub enum OfflineAlgo {
    Cucb,
    Clcb,
    EpsGreedy,
    Lfu,
}

impl OfflineAlgo {
    pub fn name(self) -> &'static str {
        match self {
            OfflineAlgo::Cucb => "cucb",
            OfflineAlgo::Clcb => "clcb",
            OfflineAlgo::EpsGreedy => "eps-greedy",
            OfflineAlgo::Lfu => "lfu",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OfflineArgs {
    #[arg(long)]
    pub workload: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub delta: f64,
    #[arg(
        long = "n-grid",
        value_delimiter = ',',
        default_value = "100,1000,10000"
    )]
    pub n_grid: Vec<usize>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "cucb,clcb,eps-greedy,lfu"
    )]
    pub algos: Vec<OfflineAlgo>,
    /// Feedback probability: one value for all queries, or a file with one
    /// value per query (JSON array or whitespace/comma separated).
    #[arg(long, allow_negative_numbers = true)]
    pub nu: Option<String>,
    #[arg(
        long = "epsilon-g",
        default_value_t = 0.2,
        allow_negative_numbers = true
    )]
    pub epsilon_g: f64,
    /// Defaults to the workload file's value, then 0.05.
    #[arg(long, allow_negative_numbers = true)]
    pub noise_sigma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BRUTE_FORCE_BUDGET)]
    pub budget: u128,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum AlphaMode {
    /// alpha = 1 against the brute-force optimum.
    #[default]
    Bf,
    /// alpha from the curvature against the reverse-greedy cache.
    Curvature,
}

#[derive(Debug, Clone, Args)]
pub struct OnlineRunArgs {
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub delta: f64,
    #[arg(long = "T", default_value_t = 10_000)]
    pub horizon: u64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "clcb-ls,clcb,cucb,eps-greedy,lfu-static",
        value_parser = parse_algorithm
    )]
    pub algos: Vec<Algorithm>,
    #[arg(long, value_parser = parse_confidence, default_value = "alg")]
    pub confidence_variant: ConfidenceVariant,
    #[arg(
        long = "epsilon-g",
        default_value_t = 0.2,
        allow_negative_numbers = true
    )]
    pub epsilon_g: f64,
    /// Defaults to the workload file's value, then 0.05.
    #[arg(long, allow_negative_numbers = true)]
    pub noise_sigma: Option<f64>,
    /// Observe a noisy cost every round instead of only on LLM calls.
    #[arg(long)]
    pub full_feedback: bool,
    #[arg(long, value_enum, default_value_t = AlphaMode::Bf)]
    pub alpha_mode: AlphaMode,
    #[arg(long, default_value_t = DEFAULT_BRUTE_FORCE_BUDGET)]
    pub budget: u128,
}

#[derive(Debug, Clone, Args)]
pub struct OnlineArgs {
    #[arg(long)]
    pub workload: PathBuf,
    #[command(flatten)]
    pub run: OnlineRunArgs,
    /// Curve downsampling stride in rounds.
    #[arg(long, default_value_t = 100)]
    pub stride: u64,
    /// Also write every run's per-round trace CSV under `<out>/traces`.
    #[arg(long)]
    pub traces: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// `k` or `m`.
    #[arg(long = "var")]
    pub variable: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<usize>,
    /// Workload reused for a k sweep.
    #[arg(long)]
    pub workload: Option<PathBuf>,
    #[command(flatten)]
    pub run: OnlineRunArgs,
    /// Generator settings for an m sweep (`--m` is ignored).
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_arrival(s: &str) -> Result<Arrival> {
    match s.split_once(':') {
        None if s == "uniform" => Ok(Arrival::Uniform),
        Some(("zipf", v)) => v
            .parse()
            .map(Arrival::Zipf)
            .map_err(|_| Error::Config(format!("bad zipf exponent {v:?}"))),
        _ => Err(Error::Config(format!(
            "arrival must be `uniform` or `zipf:<s>`, got {s:?}"
        ))),
    }
}

fn parse_metric(s: &str) -> Result<DistanceMetric> {
    match s.split_once(':') {
        None if s == "euclidean" => Ok(DistanceMetric::Euclidean),
        None if s == "cosine" => Ok(DistanceMetric::Cosine),
        Some(("threshold", v)) => match v.parse::<f64>() {
            Ok(epsilon) if epsilon >= 0.0 => Ok(DistanceMetric::Threshold { epsilon }),
            _ => Err(Error::Config(format!("bad threshold epsilon {v:?}"))),
        },
        _ => Err(Error::Config(format!(
            "metric must be euclidean, cosine or threshold:<eps>, got {s:?}"
        ))),
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm> {
    s.parse()
}

fn parse_confidence(s: &str) -> Result<ConfidenceVariant> {
    s.parse()
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenWorkload(a) => commands::gen_workload(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Offline(a) => commands::offline(&a),
        Command::Online(a) => commands::online(&a),
        Command::Sweep(a) => commands::sweep(&a),
    }
}

/// Parses the process arguments, runs them and maps the outcome to an exit
/// code: 0 on success, 1 on runtime failure, 2 on invalid input.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

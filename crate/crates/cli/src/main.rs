//! `nc-meter`: measure neural-collapse statistics of streamed embeddings.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "nc-meter",
    version,
    about = "Neural-collapse metrics over streamed embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fold NCEMB1 shards into an NCSTA1 statistics checkpoint.
    Accumulate(AccumulateArgs),
    /// Compute the metric report from a checkpoint.
    Metrics(MetricsArgs),
    /// Linear-vs-nearest-center agreement on a held-out stream.
    Agreement(AgreementArgs),
    /// Permutation test of R² between a metric column and a target column.
    Permtest(PermtestArgs),
    /// Generate a synthetic instance with known metric values.
    Synth(SynthArgs),
    /// Collect metric reports into one CSV row per run.
    Report(ReportArgs),
}

/// Thresholds and parallelism shared by the measuring subcommands.
#[derive(Args, Debug, Clone)]
struct TuningArgs {
    /// Minimum samples per class for variance-based metrics.
    #[arg(long, default_value_t = 2)]
    min_count: u64,
    /// Minimum samples per class for a mean to enter geometry metrics.
    #[arg(long, default_value_t = 1)]
    geometry_min_count: u64,
    /// Classes per pairwise tile edge.
    #[arg(long, default_value_t = 1024)]
    tile: usize,
    /// Samples per agreement batch.
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 1e-12)]
    eps_direction: f64,
    #[arg(long, default_value_t = 1e-24)]
    eps_distance_sq: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps_tie: f64,
    #[arg(long, default_value_t = 1e-9)]
    eps_cov_mean: f64,
    /// Worker threads (default: all cores). NC_METER_THREADS takes precedence.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct AccumulateArgs {
    /// NCEMB1 shard; repeat for several.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Fix the class count instead of inferring it from the largest label.
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// NCSTA1 checkpoint.
    #[arg(long)]
    stats: PathBuf,
    /// NCWGT1 classifier; enables the duality entries.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// NCEMB1 held-out stream; with --weights, adds the agreement entries.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args, Debug)]
struct AgreementArgs {
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args, Debug)]
struct PermtestArgs {
    /// CSV with a run id column followed by named numeric columns.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    metric: String,
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeometryArg {
    SimplexEtf,
    Orthonormal,
    UniformSphere,
    RandomGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassifierArg {
    Tied,
    Random,
    Perturbed,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    num_classes: usize,
    #[arg(long)]
    dim: usize,
    /// Samples per class, for every class.
    #[arg(long, default_value_t = 100)]
    samples_per_class: u64,
    /// Comma-separated per-class counts; overrides --samples-per-class.
    #[arg(long, value_delimiter = ',')]
    class_counts: Option<Vec<u64>>,
    #[arg(long, value_enum, default_value_t = GeometryArg::SimplexEtf)]
    geometry: GeometryArg,
    /// Standard deviation of the isotropic Gaussian noise per coordinate.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = ClassifierArg::Tied)]
    classifier: ClassifierArg,
    /// Relative noise added to tied rows with --classifier perturbed.
    #[arg(long, default_value_t = 0.1)]
    perturbation: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    validation_per_class: u64,
    #[arg(long)]
    out_emb: PathBuf,
    #[arg(long)]
    out_wgt: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
    /// Held-out stream; required when --validation-per-class > 0.
    #[arg(long)]
    out_val: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Metric report JSON; repeat for several runs.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Accumulate(a) => commands::accumulate(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Agreement(a) => commands::agreement(a),
        Command::Permtest(a) => commands::permtest(a),
        Command::Synth(a) => commands::synth(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code)
        }
    }
}

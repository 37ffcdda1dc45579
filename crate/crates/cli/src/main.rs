//! `feast`: pick compiler flags for new programs from the flags that worked
//! best on similar, already-tuned programs.
//!
//! Exit status: 0 on success, 1 on runtime failure, 2 on usage or input
//! validation errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feast_core::assignment::Scaling;
use feast_core::{AssignMethod, Scheme, SelectionMethod};
use serde::Serialize;

const FORMATS: &str = "\
Input files (comma separated, header row, `.` decimal point):
  features.csv   program_id,<one column per feature id, manifest order>
  timings.csv    program_id,config_id,mean_seconds,repetitions
  configs.csv    config_id,flags          (flags space separated; one id must be `null`)
  manifest.csv   feature_id,description,category   (optional; default is the
                 56 static features ft1..ft56)

Outputs (written to --out, which is created if needed):
  run_config.json    every effective option, including defaults and seed
  selection.csv      method,feature_id,rank,score,category
  plan.json          training set, optimal configs, selected features, assignments
  report.json        execution-time totals and time reduction per Nexec
  sweep.csv          K,mean_T_auto,std_T_auto,trials (all programs)
  sweep_untrained.csv  same columns, untrained programs only
  trgrid.csv         K,Nexec,TR
  clusters.csv       program_id,cluster_id,is_medoid
  timings.csv / failures.csv   measurement results (measure)

Per-trial seeds are derived from --seed, K and the trial index with a
SplitMix64 counter scheme, so every output is reproducible from
run_config.json alone.";

#[derive(Debug, Parser)]
#[command(name = "feast", version, about = "Static-feature compiler flag autotuning", after_long_help = FORMATS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Rank features by relevance to the optimal execution time of every program.
    Select(SelectArgs),
    /// Build an assignment plan (active: choose K training programs; passive: given).
    Assign(AssignArgs),
    /// Score a plan against the recorded timings.
    Evaluate(EvaluateArgs),
    /// Repeat assignment over many training sets for each K.
    Sweep(SweepArgs),
    /// Compile and time every (program, configuration) pair of a corpus.
    Measure(MeasureArgs),
    /// Cluster programs by their features and report the medoids.
    Cluster(ClusterArgs),
    /// Write a synthetic bundle with a known set of relevant features.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
struct DataArgs {
    /// Directory holding features.csv, timings.csv, configs.csv and optionally manifest.csv.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    features: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    timings: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    configs: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct OutArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ModelArgs {
    /// Number of features to select.
    #[arg(long = "M", visible_alias = "m", default_value_t = 10, value_parser = at_least::<1>)]
    m: usize,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 3, value_parser = at_least::<2>)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct SelectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// lasso, sfs or sbs.
    #[arg(long, default_value = "lasso")]
    method: SelectionMethod,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct AssignArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// active or passive.
    #[arg(long)]
    scheme: Scheme,
    /// Training-set size (active scheme).
    #[arg(long = "K", visible_alias = "k")]
    k: Option<usize>,
    /// Comma-separated training program ids (passive scheme).
    #[arg(long, value_delimiter = ',')]
    train: Vec<String>,
    /// lasso, sfs, sbs or all_features.
    #[arg(long, default_value = "lasso")]
    method: AssignMethod,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    /// standardized or raw feature space for distances and clustering.
    #[arg(long, default_value = "standardized")]
    scaling: Scaling,
    /// k-means restarts (active scheme).
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    /// Plan written by `assign`.
    #[arg(long, value_name = "JSON")]
    plan: PathBuf,
    /// Comma-separated execution counts for the time reduction.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
    nexec: Vec<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "passive")]
    scheme: Scheme,
    /// Comma-separated training-set sizes.
    #[arg(long = "K", visible_alias = "k", value_delimiter = ',', required = true)]
    k: Vec<usize>,
    #[arg(long, default_value = "lasso")]
    method: AssignMethod,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "standardized")]
    scaling: Scaling,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Comma-separated execution counts for trgrid.csv.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000,10000")]
    nexec: Vec<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct MeasureArgs {
    /// TOML file: compile_template, repetitions, timeout_seconds, statistic
    /// and one [[program]] table (id, source, args) per program.
    #[arg(long, value_name = "TOML")]
    plan: PathBuf,
    /// Configuration catalog (configs.csv).
    #[arg(long, value_name = "CSV")]
    configs: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct ClusterArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[arg(long = "K", visible_alias = "k")]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value = "standardized")]
    scaling: Scaling,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    programs: usize,
    #[arg(long = "n-features", default_value_t = 56)]
    n_features: usize,
    /// Catalog size including the null configuration (at most 192).
    #[arg(long = "n-configs", default_value_t = 192)]
    n_configs: usize,
    /// Features the optimal time depends on.
    #[arg(long = "true-features", default_value_t = 10)]
    true_features: usize,
    /// Noise standard deviation as a fraction of the signal's.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Number of program populations; omit for a single one.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, default_value_t = 0.02)]
    sensitivity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArgs,
}

fn at_least<const MIN: usize>(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|_| format!("`{s}` is not a whole number"))?;
    if v < MIN {
        return Err(format!("must be at least {MIN}"));
    }
    Ok(v)
}

/// How a command failed, which decides the exit status.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (Failure::Usage(e) | Failure::Runtime(e)) = &failure;
            eprintln!("error: {e:#}");
            ExitCode::from(failure.code())
        }
    }
}

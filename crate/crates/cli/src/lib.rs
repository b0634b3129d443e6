//! `lapse`: synthetic portfolios, tuning, training, evaluation and variable
//! relevance from the command line. Every command that writes files also
//! writes a `manifest.txt` next to them.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use lapsekit::config::ConfigError;
use lapsekit::model::ModelError;
use lapsekit::synthgen::SynthError;
use lapsekit::tuning::{Protocol, TuneError};
use lapsekit::varrel::VarRelError;

mod commands;
mod manifest;

pub use commands::{curves, eval, explore, synth, train, tune, varrel};
pub use manifest::{sha256_file, Manifest};

/// Exit status for usage and configuration errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures while running a command.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "lapse", version, about = "Lapse prediction on insurance portfolios")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic portfolio (prepared data, schema, ground truth)
    Synth(SynthArgs),
    /// Grid-search hyperparameters under a holdout or k-fold protocol
    Tune(TuneArgs),
    /// Fit one model and save it
    Train(TrainArgs),
    /// Score data with a saved model: metrics and ROC/PR curves
    Eval(EvalArgs),
    /// Cross-validated ROC/PR curves, per fold and aggregated
    Curves(CurvesArgs),
    /// Normalized variable relevance of saved rf, xgb and elanet models
    Varrel(VarrelArgs),
    /// Binned lapse rates of one feature
    Explore(ExploreArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Data CSV
    #[arg(long)]
    pub data: PathBuf,
    /// Schema file (`name:role[:level|level...]` per line)
    #[arg(long)]
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Master seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (0 = all cores); results do not depend on it
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Scores above this value count as predicted lapses
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Portfolio config (`key = value`); defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the raw, unprepared portfolio
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Grid config: `family = ...` and `key = v1, v2, ...` lines
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// holdout:F (test share F) or cv:K
    #[arg(long, default_value = "holdout:0.25")]
    pub protocol: Protocol,
    /// Metric used to pick the best cell
    #[arg(long, default_value = "auc.te")]
    pub metric: String,
    /// Split and fold without keeping the class ratio
    #[arg(long)]
    pub no_stratify: bool,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model config: `family = ...` and one value per hyperparameter
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Model file written by `lapse train`
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Suffix of the metric columns, e.g. `te` gives auc.te
    #[arg(long, default_value = "te")]
    pub tag: String,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AggregationArg {
    Vertical,
    Pooled,
}

#[derive(Debug, Clone, Args)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model config as for `lapse train`
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Test share set aside first, as `tune --protocol holdout:F` does with
    /// the same seed; folds use the rest. 0 folds over all rows
    #[arg(long, default_value_t = 0.25)]
    pub holdout: f64,
    #[arg(long)]
    pub no_stratify: bool,
    #[arg(long, value_enum, default_value_t = AggregationArg::Vertical)]
    pub aggregation: AggregationArg,
    /// Grid points for vertical averaging
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VarrelArgs {
    /// Model files (repeat the flag)
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset tag written into every row
    #[arg(long, default_value = "data")]
    pub dataset: String,
    /// `feature,group` file; the portfolio grouping is used otherwise
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub feature: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Equal-width bins for numeric features
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Bin on a log10 scale (positive values only)
    #[arg(long)]
    pub log: bool,
}

/// A problem with how the command was invoked or configured.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Whether `err` stems from invocation or configuration rather than from running.
pub fn is_usage_error(err: &anyhow::Error) -> bool {
    let model_cfg = |e: &ModelError| matches!(e, ModelError::Config(_) | ModelError::UnknownFamily(_));
    err.chain().any(|c| {
        c.is::<UsageError>()
            || c.is::<ConfigError>()
            || c.downcast_ref::<ModelError>().is_some_and(model_cfg)
            || matches!(
                c.downcast_ref::<TuneError>(),
                Some(TuneError::Config(_) | TuneError::Protocol(_) | TuneError::UnknownMetric(_) | TuneError::EmptyGrid)
            )
            || matches!(c.downcast_ref::<TuneError>(), Some(TuneError::Model(m)) if model_cfg(m))
            || matches!(c.downcast_ref::<VarRelError>(), Some(VarRelError::Unsupported(_)))
            || matches!(
                c.downcast_ref::<SynthError>(),
                Some(SynthError::Config(_) | SynthError::InvalidConfig(_))
            )
    })
}

/// Runs a parsed command on a pool of `threads` workers (0 = all cores).
pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(a) => synth::run(&a),
        Command::Tune(a) => with_threads(a.run.threads, || tune::run(&a)),
        Command::Train(a) => with_threads(a.run.threads, || train::run(&a)),
        Command::Eval(a) => with_threads(a.threads, || eval::run(&a)),
        Command::Curves(a) => with_threads(a.run.threads, || curves::run(&a)),
        Command::Varrel(a) => varrel::run(&a),
        Command::Explore(a) => explore::run(&a),
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> anyhow::Result<T> + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    pool.install(f)
}

/// Parses `args` (program name first), runs the command, reports errors on
/// stderr and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_usage_error(&err) {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

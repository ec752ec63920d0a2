use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::comm::Topology;
use crate::dataset::SplitSpec;
use crate::trainers::EvalCadence;

#[derive(Debug, Parser)]
#[command(name = "psgd-svm", version, about = "Data-parallel SGD linear SVM trainer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write it with its metrics.
    Train(TrainArgs),
    /// Score a saved model on a LIBSVM file and print a JSON report.
    Evaluate(EvaluateArgs),
    /// Train over a grid of block sizes and worker counts.
    Sweep(SweepArgs),
    /// Run one rank of a socket-backed distributed training job.
    Worker(WorkerArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeKind {
    Seq,
    Replica,
    Dist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Inproc,
    Socket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum EvalOn {
    #[default]
    Cv,
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Part {
    #[default]
    Test,
    Cv,
    Train,
}

/// Options shared by `train`, `sweep` and `worker`. Anything left unset
/// falls back to the `--config` file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// LIBSVM data file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Name used in output file names (default: data file stem).
    #[arg(long)]
    pub dataset_name: Option<String>,
    /// Feature dimension override.
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Read label 0 as -1.
    #[arg(long)]
    pub zero_as_negative: bool,
    /// train/cv/test fractions, e.g. 60/20/20.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<SplitSpec>,
    /// Seed of the train/cv/test shuffle (default: --seed).
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Seed for shards, shuffles and initialization (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Regularization constant C.
    #[arg(long)]
    pub c: Option<f64>,
    /// Number of epochs T.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Number of workers K.
    #[arg(long)]
    pub k: Option<usize>,
    /// Block size B: samples per worker between synchronizations.
    #[arg(long)]
    pub block: Option<usize>,
    /// every-sync, per-epoch or every-N.
    #[arg(long)]
    pub eval_cadence: Option<EvalCadence>,
    #[arg(long, value_enum)]
    pub eval_on: Option<EvalOn>,
    /// Reshuffle each shard before every epoch.
    #[arg(long)]
    pub reshuffle_epochs: bool,
    /// Independent Gaussian initializations; the best on cv is kept.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Standard deviation of the Gaussian initialization.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Socket reduction topology: star or ring.
    #[arg(long)]
    pub topology: Option<Topology>,
    /// host:port where rank 0 listens.
    #[arg(long)]
    pub coordinator: Option<String>,
    /// Seconds a rank waits on a peer before aborting.
    #[arg(long)]
    pub sync_timeout_secs: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_split(s: &str) -> Result<SplitSpec, String> {
    s.parse::<SplitSpec>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeKind>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// replica or dist.
    #[arg(long, value_enum)]
    pub mode: Option<ModeKind>,
    /// Comma-separated block sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub blocks: Vec<usize>,
    /// Comma-separated worker counts (default: --k).
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct WorkerArgs {
    /// This process's rank, 0 is the coordinator.
    #[arg(long)]
    pub rank: usize,
    /// Number of ranks (default: --k).
    #[arg(long)]
    pub group_size: Option<usize>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Re-split the data as in training and score one part.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<SplitSpec>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Part::Test)]
    pub part: Part,
    /// C for the objective (default: the model's training C).
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub zero_as_negative: bool,
}

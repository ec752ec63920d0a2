//! Command-line front end. Exit codes: 0 success, 1 usage, 2 data error,
//! 3 training abort, 4 communication failure. Diagnostics start with the
//! name of the failing module.

pub mod args;
pub mod manifest;
pub mod model_file;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::json;
use thiserror::Error;

pub use args::{BackendKind, Cli, Command, EvalOn, ModeKind, Part};
pub use manifest::{ConfigFile, RunManifest};
pub use model_file::{ModelFile, ModelFileError};

use crate::comm::{CommError, SocketHandle, SocketOptions};
use crate::dataset::{self, Dataset, ParseOptions, Splits};
use crate::metrics::{self, MetricsError};
use crate::sgd;
use crate::trainers::{self, TrainError, TrainerConfig, TrainingResult};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Train(String),
    #[error("{0}")]
    Comm(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Train(_) => 3,
            CliError::Comm(_) => 4,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Comm(c) => CliError::Comm(format!("comm: {c}")),
            TrainError::InvalidConfig(m) => CliError::Usage(format!("trainers: {m}")),
            TrainError::Dataset(d) => CliError::Data(format!("dataset: {d}")),
            TrainError::Metrics(m @ MetricsError::Write { .. }) => CliError::Data(format!("metrics: {m}")),
            other => CliError::Train(format!("trainers: {other}")),
        }
    }
}

impl From<CommError> for CliError {
    fn from(e: CommError) -> Self {
        CliError::Comm(format!("comm: {e}"))
    }
}

fn model_err(e: ModelFileError) -> CliError {
    CliError::Data(format!("model: {e}"))
}

fn metrics_err(e: MetricsError) -> CliError {
    CliError::Data(format!("metrics: {e}"))
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(&RunManifest::resolve(&a.run, a.mode)?),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sweep(a) => cmd_sweep(&RunManifest::resolve(&a.run, a.mode)?, &a.blocks, &a.ks),
        Command::Worker(a) => {
            let m = RunManifest::resolve(&a.run, Some(ModeKind::Dist))?;
            let k = a.group_size.unwrap_or(m.trainer.parallelism);
            cmd_worker(&m, a.rank, k)
        }
    }
}

pub fn load_dataset(path: &Path, opts: &ParseOptions) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("dataset: cannot open {}: {e}", path.display())))?;
    dataset::parse_libsvm(BufReader::new(file), opts)
        .map_err(|e| CliError::Data(format!("dataset: {}: {e}", path.display())))
}

pub fn load_splits(m: &RunManifest) -> Result<Splits, CliError> {
    let ds = load_dataset(&m.data_path, &m.parse)?;
    dataset::split(&ds, &m.split).map_err(|e| CliError::Data(format!("dataset: {}: {e}", m.data_path.display())))
}

fn eval_set<'a>(m: &RunManifest, splits: &'a Splits) -> &'a Dataset {
    match m.eval_on {
        EvalOn::Cv => &splits.cv,
        EvalOn::Train => &splits.train,
    }
}

/// The manifest's trainer settings for one `(K, B)` point. Sequential runs
/// use K = 1 and one block per epoch.
pub fn run_config(m: &RunManifest, train_len: usize, k: usize, b: usize) -> TrainerConfig {
    let mut cfg = m.trainer;
    if m.mode == ModeKind::Seq {
        cfg.parallelism = 1;
        cfg.block_size = train_len.max(1);
    } else {
        cfg.parallelism = k;
        cfg.block_size = b;
    }
    cfg
}

fn labels(m: &RunManifest) -> BTreeMap<String, String> {
    let mut l = BTreeMap::new();
    l.insert("dataset".into(), m.dataset_name.clone());
    l.insert("mode".into(), format!("{:?}", m.mode).to_lowercase());
    l.insert("eval_on".into(), format!("{:?}", m.eval_on).to_lowercase());
    if m.mode == ModeKind::Dist {
        l.insert("backend".into(), format!("{:?}", m.backend).to_lowercase());
        if m.backend == BackendKind::Socket {
            l.insert("topology".into(), format!("{:?}", m.topology).to_lowercase());
        }
    }
    l
}

fn finish(m: &RunManifest, splits: &Splits, r: &mut TrainingResult) -> Result<(), CliError> {
    let test = sgd::accuracy(&r.final_model.weights, &splits.test).map_err(|e| CliError::Train(format!("sgd: {e}")))?;
    r.log.test_accuracy = Some(test);
    r.log.labels.extend(labels(m));
    Ok(())
}

pub fn train_once(m: &RunManifest, splits: &Splits, cfg: &TrainerConfig) -> Result<TrainingResult, CliError> {
    let mode = m.trainer_mode(cfg.parallelism);
    let mut r = trainers::restart_harness(&mode, &splits.train, eval_set(m, splits), cfg, m.restarts, m.sigma)?;
    finish(m, splits, &mut r)?;
    Ok(r)
}

fn out_dir(m: &RunManifest) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&m.output_dir)
        .map_err(|e| CliError::Data(format!("cli: cannot create {}: {e}", m.output_dir.display())))?;
    Ok(&m.output_dir)
}

fn csv_path(m: &RunManifest, cfg: &TrainerConfig) -> Result<PathBuf, CliError> {
    let stem = metrics::run_file_stem(&m.dataset_name, cfg.parallelism, cfg.block_size, m.trainer.seed);
    Ok(out_dir(m)?.join(format!("{stem}.csv")))
}

fn run_summary(r: &TrainingResult, model: Option<&Path>, csv: &Path) -> serde_json::Value {
    json!({
        "model": model.map(|p| p.display().to_string()),
        "metrics": csv.display().to_string(),
        "syncs": r.log.totals.syncs,
        "restarts": r.restarts_used,
        "final_objective": r.log.final_objective(),
        "final_cv_accuracy": r.log.final_cv_accuracy(),
        "test_accuracy": r.log.test_accuracy,
        "mean_cv_curve": r.mean_cv_curve,
    })
}

pub fn cmd_train(m: &RunManifest) -> Result<(), CliError> {
    let splits = load_splits(m)?;
    let cfg = run_config(m, splits.train.len(), m.trainer.parallelism, m.trainer.block_size);
    let r = train_once(m, &splits, &cfg)?;
    let model_path = out_dir(m)?.join("model.json");
    ModelFile::new(&r.final_model, &cfg, labels(m)).save(&model_path).map_err(model_err)?;
    let csv = csv_path(m, &cfg)?;
    metrics::emit_csv(&r.log, &csv).map_err(metrics_err)?;
    println!("{}", run_summary(&r, Some(&model_path), &csv));
    Ok(())
}

pub fn cmd_sweep(m: &RunManifest, blocks: &[usize], ks: &[usize]) -> Result<(), CliError> {
    if m.mode == ModeKind::Seq {
        return Err(CliError::Usage("cli: sweep needs --mode replica or dist".into()));
    }
    let splits = load_splits(m)?;
    let n = splits.train.len();
    let ks = if ks.is_empty() { vec![m.trainer.parallelism] } else { ks.to_vec() };
    let mut logs = Vec::new();
    for &k in &ks {
        for &b in blocks {
            let shard = match dataset::shard_size(n, k) {
                Some(s) if k >= 1 => s,
                _ => {
                    eprintln!("sweep: skipping K={k} B={b}: K must be in 1..={n}");
                    continue;
                }
            };
            if b < 1 || b > shard {
                eprintln!("sweep: skipping K={k} B={b}: B must be in 1..={shard} (shard size)");
                continue;
            }
            let cfg = run_config(m, n, k, b);
            let r = train_once(m, &splits, &cfg)?;
            let csv = csv_path(m, &cfg)?;
            metrics::emit_csv(&r.log, &csv).map_err(metrics_err)?;
            eprintln!(
                "sweep: K={k} B={b} syncs={} comm_ms={:.3}",
                r.log.totals.syncs,
                r.log.totals.comm_ns as f64 / 1e6
            );
            logs.push(r.log);
        }
    }
    let rows = metrics::breakdown_report(&logs);
    let table = out_dir(m)?.join(format!("breakdown_{}.csv", m.dataset_name));
    let file = File::create(&table).map_err(|e| CliError::Data(format!("metrics: cannot write {}: {e}", table.display())))?;
    metrics::write_breakdown_csv(&rows, file)
        .map_err(|e| CliError::Data(format!("metrics: cannot write {}: {e}", table.display())))?;
    print!("{}", metrics::format_breakdown(&rows));
    Ok(())
}

pub fn cmd_worker(m: &RunManifest, rank: usize, k: usize) -> Result<(), CliError> {
    if rank >= k {
        return Err(CliError::Usage(format!("cli: rank {rank} outside group of {k}")));
    }
    if m.restarts != 1 {
        return Err(CliError::Usage("cli: worker runs take a single restart".into()));
    }
    let splits = load_splits(m)?;
    let mut cfg = m.trainer;
    cfg.parallelism = k;
    cfg.validate_parallel(splits.train.len())?;
    let opts = SocketOptions {
        timeout: m.sync_timeout,
        topology: m.topology,
    };
    let coordinator = m.coordinator.clone().unwrap_or_else(|| manifest::DEFAULT_COORDINATOR.into());
    let mut handle = if rank == 0 {
        SocketHandle::coordinate(&coordinator, k, opts)?
    } else {
        SocketHandle::join(&coordinator, rank, k, opts)?
    };
    let init = trainers::initial_model(splits.train.dimension(), m.sigma, cfg.seed);
    let out = trainers::run_worker(&mut handle, &splits.train, eval_set(m, &splits), &cfg, &init)?;
    drop(handle);

    let mut manifest = m.clone();
    manifest.backend = BackendKind::Socket;
    let dir = out_dir(&manifest)?;
    let name = if rank == 0 { "model.json".to_string() } else { format!("model.rank{rank}.json") };
    let model_path = dir.join(name);
    ModelFile::new(&out.final_model, &cfg, labels(&manifest))
        .save(&model_path)
        .map_err(model_err)?;
    if let Some(mut r) = out.result {
        finish(&manifest, &splits, &mut r)?;
        let csv = csv_path(&manifest, &cfg)?;
        metrics::emit_csv(&r.log, &csv).map_err(metrics_err)?;
        println!("{}", run_summary(&r, Some(&model_path), &csv));
    }
    Ok(())
}

pub fn cmd_evaluate(a: &args::EvaluateArgs) -> Result<(), CliError> {
    let file = ModelFile::load(&a.model).map_err(model_err)?;
    let model = file.model().map_err(model_err)?;
    let opts = ParseOptions {
        zero_as_negative: a.zero_as_negative,
        dimension: None,
    };
    let ds = load_dataset(&a.data, &opts)?;
    if ds.dimension() > model.dimension() {
        return Err(CliError::Data(format!(
            "dataset: {} has feature index {} beyond the model dimension {}",
            a.data.display(),
            ds.dimension(),
            model.dimension()
        )));
    }
    let data = match a.split {
        Some(mut spec) => {
            spec.seed = a.split_seed.unwrap_or(a.seed);
            let s = dataset::split(&ds, &spec).map_err(|e| CliError::Data(format!("dataset: {e}")))?;
            match a.part {
                Part::Test => s.test,
                Part::Cv => s.cv,
                Part::Train => s.train,
            }
        }
        None => ds,
    };
    let c = a.c.unwrap_or(file.config.hyper.c);
    let sgd_err = |e: sgd::SgdError| CliError::Data(format!("sgd: {e}"));
    let cm = sgd::confusion(&model.weights, &data).map_err(sgd_err)?;
    let objective = sgd::objective(&model.weights, &data, c).map_err(sgd_err)?;
    println!(
        "{}",
        json!({
            "samples": data.len(),
            "accuracy": cm.accuracy(),
            "objective": objective,
            "confusion": cm,
        })
    );
    Ok(())
}

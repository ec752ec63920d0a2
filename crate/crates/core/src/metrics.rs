//! Per-sync convergence records, phase timing and CSV/JSON output.
//!
//! Each record splits a sync round into three disjoint phases measured on a
//! monotonic clock:
//!
//! * `compute_ns`: the SGD steps of the block (and the division by K that
//!   turns the all-reduce sum into the global model),
//! * `comm_ns`: the collective call, including time spent blocked waiting
//!   for slower workers,
//! * `eval_ns`: objective and accuracy on the evaluation set.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::sgd::{self, SgdError};
use crate::trainers::TrainerConfig;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("sync_index {got} does not follow {previous}")]
    OutOfOrder { previous: u64, got: u64 },
    #[error("epoch {got} precedes epoch {previous}")]
    EpochRegressed { previous: usize, got: usize },
    #[error("record field {0} is not finite or out of range")]
    InvalidValue(&'static str),
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error(transparent)]
    Sgd(#[from] SgdError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
}

/// One model synchronization. `objective` and `cv_accuracy` are `None` when
/// the evaluation cadence skipped this sync.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncRecord {
    pub epoch: usize,
    pub sync_index: u64,
    pub objective: Option<f64>,
    pub cv_accuracy: Option<f64>,
    pub compute_ns: u64,
    pub comm_ns: u64,
    pub eval_ns: u64,
    pub bytes_sent: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTotals {
    pub syncs: u64,
    pub evaluations: u64,
    pub compute_ns: u64,
    pub comm_ns: u64,
    pub eval_ns: u64,
    pub bytes_sent: u64,
}

impl PhaseTotals {
    fn add(&mut self, r: &SyncRecord) {
        self.syncs += 1;
        self.evaluations += r.objective.is_some() as u64;
        self.compute_ns += r.compute_ns;
        self.comm_ns += r.comm_ns;
        self.eval_ns += r.eval_ns;
        self.bytes_sent += r.bytes_sent;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub config: TrainerConfig,
    /// Free-form run description (mode, backend, dataset name, ...).
    pub labels: BTreeMap<String, String>,
    /// Wall-clock start of the run, RFC 3339.
    pub started_at: String,
    pub records: Vec<SyncRecord>,
    pub totals: PhaseTotals,
    /// Totals of every worker, indexed by rank; empty for single-process modes.
    pub workers: Vec<PhaseTotals>,
    /// Accuracy on the held-out test split, filled in by the caller.
    pub test_accuracy: Option<f64>,
}

impl MetricsLog {
    pub fn new(config: TrainerConfig) -> Self {
        Self {
            config,
            labels: BTreeMap::new(),
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            records: Vec::new(),
            totals: PhaseTotals::default(),
            workers: Vec::new(),
            test_accuracy: None,
        }
    }

    pub fn with_label(mut self, key: &str, value: impl Into<String>) -> Self {
        self.labels.insert(key.to_string(), value.into());
        self
    }

    pub fn record_sync(&mut self, record: SyncRecord) -> Result<(), MetricsError> {
        if let Some(last) = self.records.last() {
            if record.sync_index <= last.sync_index {
                return Err(MetricsError::OutOfOrder {
                    previous: last.sync_index,
                    got: record.sync_index,
                });
            }
            if record.epoch < last.epoch {
                return Err(MetricsError::EpochRegressed {
                    previous: last.epoch,
                    got: record.epoch,
                });
            }
        }
        if record.objective.is_some_and(|o| !o.is_finite()) {
            return Err(MetricsError::InvalidValue("objective"));
        }
        if record.cv_accuracy.is_some_and(|a| !(0.0..=1.0).contains(&a)) {
            return Err(MetricsError::InvalidValue("cv_accuracy"));
        }
        self.totals.add(&record);
        self.records.push(record);
        Ok(())
    }

    /// Accuracy of the last evaluated record.
    pub fn final_cv_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.cv_accuracy)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.objective)
    }

    /// The evaluated accuracies, in record order.
    pub fn cv_curve(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.cv_accuracy).collect()
    }
}

/// Objective and accuracy of `weights` over `eval`.
pub fn evaluate_at_sync(weights: &[f64], eval: &Dataset, c: f64) -> Result<(f64, f64), MetricsError> {
    if eval.is_empty() {
        return Err(MetricsError::EmptyEvalSet);
    }
    Ok((sgd::objective(weights, eval, c)?, sgd::accuracy(weights, eval)?))
}

/// [`evaluate_at_sync`] plus its duration.
pub fn timed_evaluation(weights: &[f64], eval: &Dataset, c: f64) -> Result<((f64, f64), u64), MetricsError> {
    let start = Instant::now();
    let out = evaluate_at_sync(weights, eval, c)?;
    Ok((out, elapsed_ns(start)))
}

pub fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos().min(u64::MAX as u128) as u64
}

/// `run_{dataset}_{K}_{B}_{seed}`.
pub fn run_file_stem(dataset: &str, k: usize, b: usize, seed: u64) -> String {
    format!("run_{dataset}_{k}_{b}_{seed}")
}

pub const CSV_HEADER: [&str; 8] = [
    "epoch",
    "sync_index",
    "objective",
    "cv_accuracy",
    "compute_ns",
    "comm_ns",
    "eval_ns",
    "bytes_sent",
];

fn write_err(path: &Path) -> impl FnOnce(io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Write {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> MetricsError + '_ {
    move |e| MetricsError::Write {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

pub fn write_csv<W: Write>(log: &MetricsLog, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &log.records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar summary: config echo, labels, totals and final accuracies.
pub fn summary_json(log: &MetricsLog) -> serde_json::Value {
    serde_json::json!({
        "config": log.config,
        "labels": log.labels,
        "started_at": log.started_at,
        "records": log.records.len(),
        "totals": log.totals,
        "workers": log.workers,
        "final_objective": log.final_objective(),
        "final_cv_accuracy": log.final_cv_accuracy(),
        "test_accuracy": log.test_accuracy,
    })
}

/// Writes `path` (CSV) and the JSON summary next to it; returns the summary path.
pub fn emit_csv(log: &MetricsLog, path: &Path) -> Result<PathBuf, MetricsError> {
    let file = File::create(path).map_err(write_err(path))?;
    write_csv(log, BufWriter::new(file)).map_err(csv_err(path))?;
    let sidecar = path.with_extension("json");
    let mut text = serde_json::to_string_pretty(&summary_json(log)).expect("summary serializes");
    text.push('\n');
    std::fs::write(&sidecar, text).map_err(write_err(&sidecar))?;
    Ok(sidecar)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub k: usize,
    pub block_size: usize,
    pub syncs: u64,
    pub compute_ns: u64,
    pub comm_ns: u64,
    pub eval_ns: u64,
    pub bytes_sent: u64,
    pub final_cv_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub comm_compute_ratio: f64,
}

/// One row per log, sorted by `(K, B)`.
pub fn breakdown_report(logs: &[MetricsLog]) -> Vec<BreakdownRow> {
    let mut rows: Vec<BreakdownRow> = logs
        .iter()
        .map(|log| {
            let t = &log.totals;
            BreakdownRow {
                k: log.config.parallelism,
                block_size: log.config.block_size,
                syncs: t.syncs,
                compute_ns: t.compute_ns,
                comm_ns: t.comm_ns,
                eval_ns: t.eval_ns,
                bytes_sent: t.bytes_sent,
                final_cv_accuracy: log.final_cv_accuracy(),
                test_accuracy: log.test_accuracy,
                comm_compute_ratio: if t.compute_ns == 0 {
                    0.0
                } else {
                    t.comm_ns as f64 / t.compute_ns as f64
                },
            }
        })
        .collect();
    rows.sort_by_key(|r| (r.k, r.block_size));
    rows
}

pub fn write_breakdown_csv<W: Write>(rows: &[BreakdownRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width text table for terminals.
pub fn format_breakdown(rows: &[BreakdownRow]) -> String {
    let ms = |ns: u64| ns as f64 / 1e6;
    let pct = |a: Option<f64>| a.map_or("-".to_string(), |a| format!("{:.2}", 100.0 * a));
    let mut s = format!(
        "{:>4} {:>6} {:>8} {:>12} {:>12} {:>12} {:>12} {:>8} {:>8} {:>9}\n",
        "K", "B", "syncs", "compute_ms", "comm_ms", "eval_ms", "bytes", "cv_%", "test_%", "comm/comp"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>4} {:>6} {:>8} {:>12.3} {:>12.3} {:>12.3} {:>12} {:>8} {:>8} {:>9.3}\n",
            r.k,
            r.block_size,
            r.syncs,
            ms(r.compute_ns),
            ms(r.comm_ns),
            ms(r.eval_ns),
            r.bytes_sent,
            pct(r.final_cv_accuracy),
            pct(r.test_accuracy),
            r.comm_compute_ratio
        ));
    }
    s
}

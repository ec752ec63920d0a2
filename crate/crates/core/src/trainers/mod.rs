//! The three training procedures: sequential SGD, the single-threaded
//! replica of the distributed computation, and the distributed trainer.
//!
//! Replica and distributed share one schedule. Each of K shards is split
//! into blocks of B samples; in each round every shard runs its block from
//! the current global weights, and the K results are summed in rank order
//! and divided by K. The learning rate depends only on the epoch.

pub mod distributed;
pub mod restart;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comm::{CommError, SyncGroup};
use crate::dataset::{self, Dataset, DatasetError};
use crate::metrics::{self, elapsed_ns, MetricsError, MetricsLog, SyncRecord};
use crate::sgd::{self, HyperParams, ModelState, SgdError};

pub use distributed::{run_worker, train_distributed, WorkerOutput};
pub use restart::restart_harness;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite weights at epoch {epoch}, worker {rank}, sample {sample}")]
    NonFinite { epoch: usize, rank: usize, sample: usize },
    #[error("non-finite global weights after sync {sync_index} (epoch {epoch})")]
    NonFiniteGlobal { epoch: usize, sync_index: u64 },
    #[error("worker {0} panicked")]
    WorkerPanicked(usize),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sgd(#[from] SgdError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Comm(#[from] CommError),
}

/// When to evaluate objective and accuracy. The last sync of a run is
/// always evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalCadence {
    #[default]
    EverySync,
    EveryN(u64),
    PerEpoch,
}

impl EvalCadence {
    fn due(self, sync_index: u64, last_in_epoch: bool, last_overall: bool) -> bool {
        last_overall
            || match self {
                EvalCadence::EverySync => true,
                EvalCadence::EveryN(n) => (sync_index + 1) % n == 0,
                EvalCadence::PerEpoch => last_in_epoch,
            }
    }
}

impl fmt::Display for EvalCadence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalCadence::EverySync => f.write_str("every-sync"),
            EvalCadence::EveryN(n) => write!(f, "every-{n}"),
            EvalCadence::PerEpoch => f.write_str("per-epoch"),
        }
    }
}

impl FromStr for EvalCadence {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "every-sync" => Ok(EvalCadence::EverySync),
            "per-epoch" => Ok(EvalCadence::PerEpoch),
            _ => match s.strip_prefix("every-").map(str::parse::<u64>) {
                Some(Ok(n)) if n >= 1 => Ok(EvalCadence::EveryN(n)),
                _ => Err(format!(
                    "unknown eval cadence `{s}` (expected every-sync, per-epoch or every-N)"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub hyper: HyperParams,
    /// Samples each worker processes between synchronizations.
    pub block_size: usize,
    /// Number of workers K.
    pub parallelism: usize,
    pub seed: u64,
    pub eval_cadence: EvalCadence,
    /// Reshuffle every shard before each epoch with an epoch-derived seed.
    pub reshuffle_each_epoch: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            hyper: HyperParams { c: 1.0, epochs: 1 },
            block_size: 1,
            parallelism: 1,
            seed: 0,
            eval_cadence: EvalCadence::EverySync,
            reshuffle_each_epoch: false,
        }
    }
}

impl TrainerConfig {
    /// Checks K and B against a training set of `n` samples and returns the
    /// shard size.
    pub fn validate_parallel(&self, n: usize) -> Result<usize, TrainError> {
        self.hyper.validate()?;
        if self.parallelism < 1 || self.block_size < 1 {
            return Err(TrainError::InvalidConfig("K and B must be at least 1".into()));
        }
        let shard = dataset::shard_size(n, self.parallelism).ok_or_else(|| {
            TrainError::InvalidConfig(format!("K = {} exceeds the {n} training samples", self.parallelism))
        })?;
        if self.block_size > shard {
            return Err(TrainError::InvalidConfig(format!(
                "B = {} exceeds the per-worker shard size {shard}",
                self.block_size
            )));
        }
        Ok(shard)
    }

    /// All-reduce calls over the whole run: `T · ceil(shard / B)`.
    pub fn expected_syncs(&self, shard: usize) -> u64 {
        (self.hyper.epochs * shard.div_ceil(self.block_size)) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingResult {
    pub final_model: ModelState,
    pub log: MetricsLog,
    pub restarts_used: usize,
    /// Mean accuracy across restarts at each evaluated sync.
    pub mean_cv_curve: Vec<f64>,
}

impl TrainingResult {
    fn single(final_model: ModelState, log: MetricsLog) -> Self {
        let mean_cv_curve = log.cv_curve();
        Self {
            final_model,
            log,
            restarts_used: 1,
            mean_cv_curve,
        }
    }
}

/// Sees the global weights after every sync (every sample in sequential mode).
pub trait SyncObserver {
    fn on_sync(&mut self, epoch: usize, sync_index: u64, weights: &[f64]);
}

pub struct NoObserver;

impl SyncObserver for NoObserver {
    fn on_sync(&mut self, _: usize, _: u64, _: &[f64]) {}
}

impl<F: FnMut(usize, u64, &[f64])> SyncObserver for F {
    fn on_sync(&mut self, epoch: usize, sync_index: u64, weights: &[f64]) {
        self(epoch, sync_index, weights)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Sequential,
    Replica,
    Distributed(SyncGroup),
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Sequential => "seq",
            Mode::Replica => "replica",
            Mode::Distributed(_) => "dist",
        }
    }

    pub fn run(
        &self,
        train: &Dataset,
        eval: &Dataset,
        config: &TrainerConfig,
        init: &ModelState,
    ) -> Result<TrainingResult, TrainError> {
        match self {
            Mode::Sequential => train_sequential(train, eval, config, init),
            Mode::Replica => train_replica(train, eval, config, init),
            Mode::Distributed(group) => train_distributed(train, eval, config, init, group),
        }
    }
}

const INIT_SALT: u64 = 0x696e_6974;

/// Seeded Gaussian starting point for a run with `seed`.
pub fn initial_model(dimension: usize, sigma: f64, seed: u64) -> ModelState {
    ModelState::gaussian(dimension, sigma, dataset::mix_seed(seed, INIT_SALT))
}

/// Sample order of shard `rank` in `epoch`: `None` means file order.
pub(crate) fn epoch_order(config: &TrainerConfig, shard_len: usize, rank: usize, epoch: usize) -> Option<Vec<usize>> {
    config.reshuffle_each_epoch.then(|| {
        let shard_seed = dataset::mix_seed(config.seed, rank as u64);
        dataset::permutation(shard_len, dataset::epoch_seed(shard_seed, epoch))
    })
}

/// Block ranges of one epoch over a shard; the last one may be short.
pub(crate) fn blocks(shard_len: usize, block: usize) -> impl Iterator<Item = Range<usize>> {
    (0..shard_len)
        .step_by(block)
        .map(move |s| s..(s + block).min(shard_len))
}

/// Runs `range` of the epoch's sample order in place. On non-finite
/// weights, replays the block from `start` to name the first bad sample.
pub(crate) fn run_block(
    w: &mut [f64],
    shard: &Dataset,
    order: Option<&[usize]>,
    range: Range<usize>,
    c: f64,
    epoch: usize,
    rank: usize,
) -> Result<(), TrainError> {
    let alpha = sgd::learning_rate(epoch);
    let samples = shard.samples();
    let pick = |i: usize| &samples[order.map_or(i, |o| o[i])];
    let start = w.to_vec();
    for i in range.clone() {
        sgd::sgd_step_in_place(w, pick(i), c, alpha)?;
    }
    if sgd::all_finite(w) {
        return Ok(());
    }
    let mut replay = start;
    for i in range {
        sgd::sgd_step_in_place(&mut replay, pick(i), c, alpha)?;
        if !sgd::all_finite(&replay) {
            return Err(TrainError::NonFinite { epoch, rank, sample: i });
        }
    }
    unreachable!("replay of a non-finite block stayed finite")
}

fn check_init(init: &ModelState, train: &Dataset) -> Result<(), TrainError> {
    if init.dimension() < train.dimension() {
        return Err(TrainError::InvalidConfig(format!(
            "initial model has dimension {}, data needs {}",
            init.dimension(),
            train.dimension()
        )));
    }
    if !init.is_finite() {
        return Err(TrainError::InvalidConfig("initial model is not finite".into()));
    }
    Ok(())
}

/// Builds a sync record, evaluating on `eval` when the cadence asks for it.
pub(crate) fn sync_record(
    config: &TrainerConfig,
    eval: &Dataset,
    w: &[f64],
    epoch: usize,
    sync_index: u64,
    flags: (bool, bool),
) -> Result<SyncRecord, TrainError> {
    let (last_in_epoch, last_overall) = flags;
    let mut rec = SyncRecord {
        epoch,
        sync_index,
        objective: None,
        cv_accuracy: None,
        compute_ns: 0,
        comm_ns: 0,
        eval_ns: 0,
        bytes_sent: 0,
    };
    if config.eval_cadence.due(sync_index, last_in_epoch, last_overall) {
        let ((objective, accuracy), ns) = metrics::timed_evaluation(w, eval, config.hyper.c)?;
        rec.objective = Some(objective);
        rec.cv_accuracy = Some(accuracy);
        rec.eval_ns = ns;
    }
    Ok(rec)
}

pub fn train_sequential(
    train: &Dataset,
    eval: &Dataset,
    config: &TrainerConfig,
    init: &ModelState,
) -> Result<TrainingResult, TrainError> {
    train_sequential_with(train, eval, config, init, &mut NoObserver)
}

/// Sequential SGD over the whole training set. K and B are ignored; the
/// observer sees the weights after every sample, and the log holds one
/// record per epoch.
pub fn train_sequential_with(
    train: &Dataset,
    eval: &Dataset,
    config: &TrainerConfig,
    init: &ModelState,
    observer: &mut dyn SyncObserver,
) -> Result<TrainingResult, TrainError> {
    config.hyper.validate()?;
    check_init(init, train)?;
    let shard = dataset::partition(train, 1, config.seed)?.remove(0);
    let epochs = config.hyper.epochs;
    let c = config.hyper.c;
    let mut w = init.weights.clone();
    let mut log = MetricsLog::new(*config).with_label("mode", "seq");
    let mut step = 0u64;
    for epoch in 0..epochs {
        let order = epoch_order(config, shard.len(), 0, epoch);
        let alpha = sgd::learning_rate(epoch);
        let start = Instant::now();
        let epoch_start = w.clone();
        for i in 0..shard.len() {
            let s = &shard.samples()[order.as_ref().map_or(i, |o| o[i])];
            sgd::sgd_step_in_place(&mut w, s, c, alpha)?;
            observer.on_sync(epoch, step, &w);
            step += 1;
        }
        let compute_ns = elapsed_ns(start);
        if !sgd::all_finite(&w) {
            let mut replay = epoch_start;
            run_block(&mut replay, &shard, order.as_deref(), 0..shard.len(), c, epoch, 0)?;
        }
        let last = epoch + 1 == epochs;
        let mut rec = sync_record(config, eval, &w, epoch, epoch as u64, (true, last))?;
        rec.compute_ns = compute_ns;
        log.record_sync(rec)?;
    }
    let model = ModelState { weights: w, epoch: epochs };
    Ok(TrainingResult::single(model, log))
}

pub fn train_replica(
    train: &Dataset,
    eval: &Dataset,
    config: &TrainerConfig,
    init: &ModelState,
) -> Result<TrainingResult, TrainError> {
    train_replica_with(train, eval, config, init, &mut NoObserver)
}

/// Single-threaded emulation of [`train_distributed`]: same shards, same
/// blocks, same rank-ordered averaging, no communication. The averaging
/// step is logged as `comm_ns` with zero bytes.
pub fn train_replica_with(
    train: &Dataset,
    eval: &Dataset,
    config: &TrainerConfig,
    init: &ModelState,
    observer: &mut dyn SyncObserver,
) -> Result<TrainingResult, TrainError> {
    let shard_len = config.validate_parallel(train.len())?;
    check_init(init, train)?;
    let k = config.parallelism;
    let shards = dataset::partition(train, k, config.seed)?;
    let epochs = config.hyper.epochs;
    let c = config.hyper.c;
    let mut w = init.weights.clone();
    let mut log = MetricsLog::new(*config).with_label("mode", "replica");
    let mut sync_index = 0u64;
    let rounds = shard_len.div_ceil(config.block_size);
    for epoch in 0..epochs {
        let orders: Vec<Option<Vec<usize>>> = (0..k).map(|r| epoch_order(config, shard_len, r, epoch)).collect();
        for (round, range) in blocks(shard_len, config.block_size).enumerate() {
            let start = Instant::now();
            let mut candidates = Vec::with_capacity(k);
            for (rank, shard) in shards.iter().enumerate() {
                let mut local = w.clone();
                run_block(&mut local, shard, orders[rank].as_deref(), range.clone(), c, epoch, rank)?;
                candidates.push(local);
            }
            let compute_ns = elapsed_ns(start);

            let start = Instant::now();
            let refs: Vec<&[f64]> = candidates.iter().map(Vec::as_slice).collect();
            let mut sum = sgd::sum_models(&refs)?;
            sgd::mean_from_sum(&mut sum, k);
            let comm_ns = elapsed_ns(start);
            w = sum;
            if !sgd::all_finite(&w) {
                return Err(TrainError::NonFiniteGlobal { epoch, sync_index });
            }

            let last_in_epoch = round + 1 == rounds;
            let flags = (last_in_epoch, last_in_epoch && epoch + 1 == epochs);
            let mut rec = sync_record(config, eval, &w, epoch, sync_index, flags)?;
            rec.compute_ns = compute_ns;
            rec.comm_ns = comm_ns;
            log.record_sync(rec)?;
            observer.on_sync(epoch, sync_index, &w);
            sync_index += 1;
        }
    }
    let model = ModelState { weights: w, epoch: epochs };
    Ok(TrainingResult::single(model, log))
}

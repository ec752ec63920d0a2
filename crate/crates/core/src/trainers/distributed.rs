//! Distributed trainer: K workers, each owning one shard, synchronizing
//! through `allreduce_sum` after every block.

use std::thread;
use std::time::Instant;

use super::{blocks, check_init, epoch_order, run_block, sync_record, TrainError, TrainerConfig, TrainingResult};
use crate::comm::{CommError, SyncGroup, SyncHandle};
use crate::dataset::{self, Dataset};
use crate::metrics::{elapsed_ns, MetricsLog, PhaseTotals};
use crate::sgd::{self, ModelState};

const TOTALS_WIDTH: usize = 6;

fn totals_to_f64s(t: &PhaseTotals) -> [f64; TOTALS_WIDTH] {
    [
        t.syncs as f64,
        t.evaluations as f64,
        t.compute_ns as f64,
        t.comm_ns as f64,
        t.eval_ns as f64,
        t.bytes_sent as f64,
    ]
}

fn totals_from_f64s(v: &[f64]) -> PhaseTotals {
    PhaseTotals {
        syncs: v[0] as u64,
        evaluations: v[1] as u64,
        compute_ns: v[2] as u64,
        comm_ns: v[3] as u64,
        eval_ns: v[4] as u64,
        bytes_sent: v[5] as u64,
    }
}

/// What one worker ends with. Every rank holds the same `final_model`; only
/// rank 0 evaluates and keeps a log.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerOutput {
    pub rank: usize,
    pub final_model: ModelState,
    pub result: Option<TrainingResult>,
}

/// One worker's part of a distributed run. Every rank loads the same
/// `train` set and takes its own shard; the initial weights are broadcast
/// from rank 0.
///
/// Non-finite weights on any worker turn the next sum non-finite, so every
/// rank stops after the same sync.
pub fn run_worker<H: SyncHandle + ?Sized>(
    handle: &mut H,
    train: &Dataset,
    eval: &Dataset,
    config: &TrainerConfig,
    init: &ModelState,
) -> Result<WorkerOutput, TrainError> {
    let (rank, k) = (handle.rank(), handle.size());
    if k != config.parallelism {
        return Err(TrainError::InvalidConfig(format!(
            "group has {k} members but K = {}",
            config.parallelism
        )));
    }
    let shard_len = config.validate_parallel(train.len())?;
    check_init(init, train)?;
    let shard = dataset::partition_shard(train, k, config.seed, rank)?;
    let epochs = config.hyper.epochs;
    let c = config.hyper.c;
    let rounds = shard_len.div_ceil(config.block_size);

    let mut w = handle.broadcast(&init.weights, 0)?;
    let mut log = MetricsLog::new(*config).with_label("mode", "dist");
    let mut mine = PhaseTotals::default();
    let mut sync_index = 0u64;
    for epoch in 0..epochs {
        let order = epoch_order(config, shard_len, rank, epoch);
        for (round, range) in blocks(shard_len, config.block_size).enumerate() {
            let start = Instant::now();
            let mut local = w.clone();
            let local_fault = match run_block(&mut local, &shard, order.as_deref(), range, c, epoch, rank) {
                Ok(()) => None,
                Err(e @ TrainError::NonFinite { .. }) => Some(e),
                Err(e) => return Err(e),
            };
            let mut compute_ns = elapsed_ns(start);

            let bytes_before = handle.bytes_sent();
            let start = Instant::now();
            let mut sum = handle.allreduce_sum(&local)?;
            let comm_ns = elapsed_ns(start);
            let bytes_sent = handle.bytes_sent() - bytes_before;

            let start = Instant::now();
            sgd::mean_from_sum(&mut sum, k);
            w = sum;
            compute_ns += elapsed_ns(start);
            if let Some(e) = local_fault {
                return Err(e);
            }
            if !sgd::all_finite(&w) {
                return Err(TrainError::NonFiniteGlobal { epoch, sync_index });
            }

            if rank == 0 {
                let last_in_epoch = round + 1 == rounds;
                let flags = (last_in_epoch, last_in_epoch && epoch + 1 == epochs);
                let mut rec = sync_record(config, eval, &w, epoch, sync_index, flags)?;
                rec.compute_ns = compute_ns;
                rec.comm_ns = comm_ns;
                rec.bytes_sent = bytes_sent;
                log.record_sync(rec)?;
            } else {
                mine.syncs += 1;
                mine.compute_ns += compute_ns;
                mine.comm_ns += comm_ns;
                mine.bytes_sent += bytes_sent;
            }
            sync_index += 1;
        }
    }
    if rank == 0 {
        mine = log.totals;
    }

    // Merge per-worker totals at rank 0: each rank fills its own slot and
    // the other slots stay zero, so the sum is exact.
    let mut slots = vec![0.0; TOTALS_WIDTH * k];
    slots[TOTALS_WIDTH * rank..TOTALS_WIDTH * (rank + 1)].copy_from_slice(&totals_to_f64s(&mine));
    let gathered = handle.allreduce_sum(&slots)?;
    let final_model = ModelState { weights: w, epoch: epochs };
    let result = (rank == 0).then(|| {
        log.workers = gathered.chunks_exact(TOTALS_WIDTH).map(totals_from_f64s).collect();
        TrainingResult::single(final_model.clone(), log)
    });
    Ok(WorkerOutput {
        rank,
        final_model,
        result,
    })
}

/// Runs all K workers of `group` as threads of this process and returns
/// rank 0's result. A failure on any worker fails the run; a worker's own
/// error is preferred over the communication errors it caused elsewhere.
pub fn train_distributed(
    train: &Dataset,
    eval: &Dataset,
    config: &TrainerConfig,
    init: &ModelState,
    group: &SyncGroup,
) -> Result<TrainingResult, TrainError> {
    if group.size != config.parallelism {
        return Err(TrainError::InvalidConfig(format!(
            "group has {} members but K = {}",
            group.size, config.parallelism
        )));
    }
    config.validate_parallel(train.len())?;
    check_init(init, train)?;
    let handles = group.connect_local()?;
    let outcomes: Vec<Result<WorkerOutput, TrainError>> = thread::scope(|s| {
        let joins: Vec<_> = handles
            .into_iter()
            .map(|mut h| s.spawn(move || run_worker(&mut h, train, eval, config, init)))
            .collect();
        joins
            .into_iter()
            .enumerate()
            .map(|(rank, j)| j.join().unwrap_or(Err(TrainError::WorkerPanicked(rank))))
            .collect()
    });

    // Rank the failures: the worker that diverged names the sample, the
    // others only saw a non-finite sum or a broken collective.
    let severity = |e: &TrainError| match e {
        TrainError::NonFinite { .. } => 3,
        TrainError::Comm(_) => 0,
        TrainError::NonFiniteGlobal { .. } => 1,
        _ => 2,
    };
    let mut root = None;
    let mut worst: Option<TrainError> = None;
    for outcome in outcomes {
        match outcome {
            Ok(out) => {
                if out.result.is_some() {
                    root = out.result;
                }
            }
            Err(e) => {
                if worst.as_ref().is_none_or(|w| severity(&e) > severity(w)) {
                    worst = Some(e);
                }
            }
        }
    }
    if let Some(e) = worst {
        return Err(e);
    }
    let mut result = root.ok_or_else(|| TrainError::Comm(CommError::Aborted("rank 0 returned no result".into())))?;
    result.log.labels.insert("backend".into(), group.backend.name().into());
    if let crate::comm::Backend::Socket { topology, .. } = &group.backend {
        result.log.labels.insert("topology".into(), format!("{topology:?}").to_lowercase());
    }
    Ok(result)
}

//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 3 8`.
//!
//! Criteria 1 and 2 need the ijcnn1 training file (35000 samples, 22
//! features, LIBSVM format). It is looked up in `$IJCNN1_PATH`, then
//! `data/ijcnn1.tr` and `data/ijcnn1` under the workspace root.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::thread;

use psgd_svm::comm::{SyncGroup, SyncHandle, Topology};
use psgd_svm::dataset::{self, Dataset, Label, ParseOptions, Sample, SparseVector, SplitSpec, Splits};
use psgd_svm::sgd::{self, HyperParams, ModelState};
use psgd_svm::trainers::{
    self, initial_model, restart_harness, train_distributed, train_replica, train_replica_with,
    train_sequential_with, EvalCadence, Mode, TrainerConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---- ijcnn1 protocol --------------------------------------------------------

const IJCNN1_SPLIT_SEED: u64 = 7;
const IJCNN1_EPOCHS: usize = 20;
const IJCNN1_RESTARTS: usize = 5;
const IJCNN1_SEQ_THRESHOLD: f64 = 0.886;
const IJCNN1_PARITY: f64 = 0.015;

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ijcnn1_path() -> Option<PathBuf> {
    let mut candidates: Vec<PathBuf> = std::env::var_os("IJCNN1_PATH").map(PathBuf::from).into_iter().collect();
    candidates.push(workspace_root().join("data/ijcnn1.tr"));
    candidates.push(workspace_root().join("data/ijcnn1"));
    candidates.into_iter().find(|p| p.is_file())
}

fn ijcnn1_splits() -> Result<&'static Splits, String> {
    static SPLITS: OnceLock<Result<Splits, String>> = OnceLock::new();
    SPLITS
        .get_or_init(|| {
            let path = ijcnn1_path().ok_or_else(|| {
                "ijcnn1 data not found (set IJCNN1_PATH or place it at data/ijcnn1.tr)".to_string()
            })?;
            let file = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let opts = ParseOptions {
                zero_as_negative: false,
                dimension: Some(22),
            };
            let ds = dataset::parse_libsvm(std::io::BufReader::new(file), &opts).map_err(|e| e.to_string())?;
            let spec = SplitSpec::new(0.6, 0.2, 0.2, IJCNN1_SPLIT_SEED).unwrap();
            dataset::split(&ds, &spec).map_err(|e| e.to_string())
        })
        .as_ref()
        .map_err(Clone::clone)
}

fn ijcnn1_config(k: usize, b: usize) -> TrainerConfig {
    TrainerConfig {
        hyper: HyperParams {
            c: 1.0,
            epochs: IJCNN1_EPOCHS,
        },
        block_size: b,
        parallelism: k,
        seed: 1,
        eval_cadence: EvalCadence::PerEpoch,
        reshuffle_each_epoch: false,
    }
}

fn ijcnn1_sequential_accuracy() -> Result<f64, String> {
    static ACC: OnceLock<Result<f64, String>> = OnceLock::new();
    ACC.get_or_init(|| {
        let s = ijcnn1_splits()?;
        let cfg = ijcnn1_config(1, s.train.len());
        let r = restart_harness(&Mode::Sequential, &s.train, &s.cv, &cfg, IJCNN1_RESTARTS, sgd::DEFAULT_INIT_SIGMA)
            .map_err(|e| e.to_string())?;
        sgd::accuracy(&r.final_model.weights, &s.test).map_err(|e| e.to_string())
    })
    .clone()
}

fn criterion_1() -> Outcome {
    match ijcnn1_sequential_accuracy() {
        Err(e) => outcome(false, e),
        Ok(acc) => outcome(
            acc >= IJCNN1_SEQ_THRESHOLD,
            format!(
                "test accuracy {:.4} (threshold {IJCNN1_SEQ_THRESHOLD}, best of {IJCNN1_RESTARTS} restarts, T={IJCNN1_EPOCHS})",
                acc
            ),
        ),
    }
}

fn criterion_2() -> Outcome {
    let seq = match ijcnn1_sequential_accuracy() {
        Err(e) => return outcome(false, e),
        Ok(a) => a,
    };
    let s = ijcnn1_splits().unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for k in [2, 4, 8] {
        for b in [8, 512] {
            let cfg = ijcnn1_config(k, b);
            let mode = Mode::Distributed(SyncGroup::inproc(k));
            let r = match restart_harness(&mode, &s.train, &s.cv, &cfg, IJCNN1_RESTARTS, sgd::DEFAULT_INIT_SIGMA) {
                Ok(r) => r,
                Err(e) => return outcome(false, format!("K={k} B={b}: {e}")),
            };
            let acc = sgd::accuracy(&r.final_model.weights, &s.test).unwrap();
            worst = worst.max((acc - seq).abs());
            parts.push(format!("K={k},B={b}:{acc:.4}"));
        }
    }
    outcome(
        worst <= IJCNN1_PARITY,
        format!("sequential {seq:.4}, max gap {worst:.4} (limit {IJCNN1_PARITY}); {}", parts.join(" ")),
    )
}

// ---- synthetic criteria ---------------------------------------------------

fn backends(k: usize) -> Vec<(&'static str, SyncGroup)> {
    vec![
        ("inproc", SyncGroup::inproc(k)),
        ("socket-star", SyncGroup::loopback(k, Topology::Star)),
        ("socket-ring", SyncGroup::loopback(k, Topology::Ring)),
    ]
}

fn criterion_3() -> Outcome {
    let train = common::synthetic(256, 20, 6, 0.1, 99);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for seed in [3u64, 17, 2024] {
        for k in [1, 2, 4] {
            for b in [1, 2, 8] {
                let cfg = TrainerConfig {
                    hyper: HyperParams { c: 1.0, epochs: 2 },
                    block_size: b,
                    parallelism: k,
                    seed,
                    eval_cadence: EvalCadence::PerEpoch,
                    reshuffle_each_epoch: false,
                };
                let init = initial_model(train.dimension(), 0.01, seed);
                let rep = train_replica(&train, &train, &cfg, &init).unwrap();
                for (name, group) in backends(k) {
                    let dist = match train_distributed(&train, &train, &cfg, &init, &group) {
                        Ok(d) => d,
                        Err(e) => return outcome(false, format!("{name} K={k} B={b} seed={seed}: {e}")),
                    };
                    worst = worst.max(common::max_abs_diff(&rep.final_model.weights, &dist.final_model.weights));
                    cases += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-10,
        format!("{cases} (seed, K, B, backend) cases, max |w_replica - w_dist| = {worst:e}"),
    )
}

fn criterion_4() -> Outcome {
    let train = common::synthetic(64, 10, 4, 0.2, 4);
    let mut steps = 0;
    for reshuffle in [false, true] {
        let cfg = TrainerConfig {
            hyper: HyperParams { c: 1.0, epochs: 3 },
            block_size: 1,
            parallelism: 1,
            seed: 21,
            eval_cadence: EvalCadence::PerEpoch,
            reshuffle_each_epoch: reshuffle,
        };
        let init = initial_model(10, 0.01, 21);
        let bits = |w: &[f64]| w.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
        let mut seq = Vec::new();
        train_sequential_with(&train, &train, &cfg, &init, &mut |_: usize, _: u64, w: &[f64]| seq.push(bits(w))).unwrap();
        let mut rep = Vec::new();
        train_replica_with(&train, &train, &cfg, &init, &mut |_: usize, _: u64, w: &[f64]| rep.push(bits(w))).unwrap();
        if seq.len() != rep.len() {
            return outcome(false, format!("trajectory lengths {} vs {}", seq.len(), rep.len()));
        }
        if let Some(i) = seq.iter().zip(&rep).position(|(a, b)| a != b) {
            return outcome(false, format!("trajectories diverge at step {i} (reshuffle={reshuffle})"));
        }
        steps += seq.len();
    }
    outcome(true, format!("{steps} syncs bitwise equal, with and without per-epoch reshuffling"))
}

fn criterion_5() -> Outcome {
    let train = common::synthetic(101, 8, 3, 0.1, 5);
    let epochs = 2;
    let mut runs = 0;
    for k in [1, 2, 3, 4] {
        let shard = dataset::shard_size(train.len(), k).unwrap();
        for b in [1, 3, 7, 16, shard] {
            let cfg = TrainerConfig {
                hyper: HyperParams { c: 1.0, epochs },
                block_size: b,
                parallelism: k,
                seed: 8,
                eval_cadence: EvalCadence::EveryN(5),
                reshuffle_each_epoch: false,
            };
            let init = initial_model(8, 0.01, 8);
            let expected = (epochs * shard.div_ceil(b)) as u64;
            let mut modes = vec![("replica", Mode::Replica)];
            for (name, g) in backends(k) {
                modes.push((name, Mode::Distributed(g)));
            }
            for (name, mode) in modes {
                let r = mode.run(&train, &train, &cfg, &init).unwrap();
                let recorded = r.log.records.len() as u64;
                if recorded != expected || r.log.totals.syncs != expected || cfg.expected_syncs(shard) != expected {
                    return outcome(
                        false,
                        format!("{name} K={k} B={b}: {recorded} syncs recorded, law gives {expected}"),
                    );
                }
                if r.log.workers.iter().any(|w| w.syncs != expected) {
                    return outcome(false, format!("{name} K={k} B={b}: a worker disagrees on the sync count"));
                }
                runs += 1;
            }
        }
    }
    outcome(true, format!("{runs} runs, all-reduce count = T*ceil(shard/B) exactly"))
}

fn criterion_6() -> Outcome {
    let d = 2000;
    let k = 4;
    let train = common::synthetic(2048, d, 20, 0.05, 6);
    let mut comm = Vec::new();
    for b in [1usize, 512] {
        let cfg = TrainerConfig {
            hyper: HyperParams { c: 1.0, epochs: 1 },
            block_size: b,
            parallelism: k,
            seed: 6,
            eval_cadence: EvalCadence::PerEpoch,
            reshuffle_each_epoch: false,
        };
        let init = initial_model(d, 0.01, 6);
        let group = SyncGroup::loopback(k, Topology::Star);
        match train_distributed(&train, &train, &cfg, &init, &group) {
            Ok(r) => comm.push((r.log.totals.comm_ns, r.log.totals.syncs)),
            Err(e) => return outcome(false, format!("B={b}: {e}")),
        }
    }
    let ratio = comm[1].0 as f64 / comm[0].0 as f64;
    outcome(
        ratio <= 0.10,
        format!(
            "comm_ns B=1: {} over {} syncs, B=512: {} over {} syncs, ratio {:.4} (limit 0.10)",
            comm[0].0, comm[0].1, comm[1].0, comm[1].1, ratio
        ),
    )
}

/// Per-sample objective `½‖w‖² + C·max(0, 1 − y⟨w, x⟩)` on dense arrays.
fn sample_objective(w: &[f64], x: &[f64], y: f64, c: f64) -> f64 {
    let norm: f64 = w.iter().map(|v| v * v).sum();
    let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    0.5 * norm + c * (1.0 - y * dot).max(0.0)
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for d in [5usize, 50] {
        while points < if d == 5 { 50 } else { 100 } {
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..d)
                .map(|_| if rng.random_bool(0.6) { rng.random_range(-2.0..2.0) } else { 0.0 })
                .collect();
            let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let c = rng.random_range(0.1..5.0);
            let margin: f64 = y * w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            if (1.0 - margin).abs() < 1e-3 {
                continue;
            }
            let pairs = x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i as u32 + 1, *v));
            let label = if y > 0.0 { Label::Positive } else { Label::Negative };
            let sample = Sample::new(SparseVector::from_pairs(pairs).unwrap(), label);
            let g = sgd::subgradient(&w, &sample, c).unwrap();
            let fd: Vec<f64> = (0..d)
                .map(|j| {
                    let mut plus = w.clone();
                    let mut minus = w.clone();
                    plus[j] += h;
                    minus[j] -= h;
                    (sample_objective(&plus, &x, y, c) - sample_objective(&minus, &x, y, c)) / (2.0 * h)
                })
                .collect();
            let err: f64 = fd.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(err / norm.max(1e-12));
            points += 1;
        }
    }
    outcome(
        worst <= 1e-5,
        format!("{points} non-kink points over d in {{5, 50}}, max relative error {worst:e} (limit 1e-5)"),
    )
}

fn allreduce_all(group: &SyncGroup, inputs: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<Vec<f64>>>, String> {
    let handles = group.connect_local().map_err(|e| e.to_string())?;
    thread::scope(|s| {
        let joins: Vec<_> = handles
            .into_iter()
            .map(|mut h| {
                s.spawn(move || {
                    let r = h.rank();
                    inputs
                        .iter()
                        .map(|trial| h.allreduce_sum(&trial[r]).map_err(|e| e.to_string()))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        joins.into_iter().map(|j| j.join().unwrap()).collect()
    })
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for k in [1usize, 2, 4, 8] {
        let trials: Vec<Vec<Vec<f64>>> = (0..100)
            .map(|t| {
                let len = 1 + t % 37;
                (0..k)
                    .map(|_| {
                        (0..len)
                            .map(|_| rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-8..=8)))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let oracle: Vec<Vec<u64>> = trials
            .iter()
            .map(|t| common::ordered_sum(t).iter().map(|x| x.to_bits()).collect())
            .collect();
        for (name, group) in backends(k) {
            let got = match allreduce_all(&group, &trials) {
                Ok(g) => g,
                Err(e) => return outcome(false, format!("{name} K={k}: {e}")),
            };
            for (rank, per_rank) in got.iter().enumerate() {
                for (t, v) in per_rank.iter().enumerate() {
                    let bits: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
                    if bits != oracle[t] {
                        return outcome(false, format!("{name} K={k} rank {rank} trial {t} differs from the oracle"));
                    }
                    checked += 1;
                }
            }
        }
    }
    outcome(
        true,
        format!("{checked} (backend, K, rank, vector) results bitwise equal to the rank-ordered sum"),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("synthetic.svm");
    common::write_libsvm(&common::synthetic(300, 12, 4, 0.1, 9), &data);
    let manifests = [
        ("seq", "mode = \"seq\""),
        ("replica", "mode = \"replica\"\nk = 3\nblock = 4"),
        ("dist-inproc", "mode = \"dist\"\nk = 3\nblock = 4"),
        ("dist-star", "mode = \"dist\"\nk = 3\nblock = 4\n[backend]\nkind = \"socket\"\ntopology = \"star\""),
        ("dist-ring", "mode = \"dist\"\nk = 3\nblock = 4\n[backend]\nkind = \"socket\"\ntopology = \"ring\""),
    ];
    for (name, body) in manifests {
        let cfg = dir.path().join(format!("{name}.toml"));
        std::fs::write(
            &cfg,
            format!(
                "[data]\npath = \"synthetic.svm\"\n[trainer]\nepochs = 3\nrestarts = 2\nseed = 5\nreshuffle_epochs = true\n{body}\n"
            ),
        )
        .unwrap();
        let mut files = Vec::new();
        for i in 0..2 {
            let out = dir.path().join(format!("{name}-{i}"));
            let o = Command::new(env!("CARGO_BIN_EXE_psgd-svm"))
                .args(["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .output()
                .unwrap();
            if !o.status.success() {
                return outcome(false, format!("{name}: {}", String::from_utf8_lossy(&o.stderr)));
            }
            files.push(std::fs::read(out.join("model.json")).unwrap());
        }
        if files[0] != files[1] {
            return outcome(false, format!("{name}: model files differ between runs"));
        }
    }
    outcome(true, "seq, replica and dist (inproc, socket star, socket ring) model files byte-identical across reruns")
}

fn criterion_10() -> Outcome {
    let schedule = [(0, 1.0), (1, 0.5), (9, 0.1)];
    let exact = schedule.iter().all(|&(t, a)| sgd::learning_rate(t) == a);
    // One sample x = 1, y = +1, C = 1 from w = 0. Epoch 0 (alpha 1): active,
    // w = 1. Epoch 1 (alpha 1/2): margin 1, w = 1/2. Epoch 2 (alpha 1/3):
    // margin 1/2, w = 1/2 - (1/3)(1/2 - 1).
    let one = Dataset::new(
        vec![Sample::new(SparseVector::from_pairs([(1, 1.0)]).unwrap(), Label::Positive)],
        1,
    )
    .unwrap();
    let cfg = TrainerConfig {
        hyper: HyperParams { c: 1.0, epochs: 3 },
        ..TrainerConfig::default()
    };
    let mut seen = Vec::new();
    trainers::train_sequential_with(&one, &one, &cfg, &ModelState::zeros(1), &mut |_: usize, _: u64, w: &[f64]| {
        seen.push(w[0])
    })
    .unwrap();
    let expected = vec![1.0, 0.5, 0.5 - (1.0 / 3.0) * (0.5 - 1.0)];
    outcome(
        exact && seen == expected,
        format!(
            "alpha(0), alpha(1), alpha(9) = {}, {}, {}; per-epoch trajectory {:?}",
            sgd::learning_rate(0),
            sgd::learning_rate(1),
            sgd::learning_rate(9),
            seen
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "ijcnn1 sequential accuracy", criterion_1),
        (2, "ijcnn1 distributed accuracy parity", criterion_2),
        (3, "replica equals distributed", criterion_3),
        (4, "K=1 B=1 replica equals sequential", criterion_4),
        (5, "sync-count law", criterion_5),
        (6, "communication reduction with block size", criterion_6),
        (7, "subgradient finite differences", criterion_7),
        (8, "collective correctness", criterion_8),
        (9, "determinism", criterion_9),
        (10, "learning-rate schedule", criterion_10),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += !result.pass as usize;
        println!(
            "criterion {n:>2} {} [{name}]: {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

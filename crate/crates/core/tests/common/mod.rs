#![allow(dead_code)]

use std::path::Path;

use psgd_svm::dataset::{Dataset, Label, Sample, SparseVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random sparse data labelled by a hidden hyperplane, with `flip` label noise.
pub fn synthetic(n: usize, d: usize, nnz: usize, flip: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let samples = (0..n)
        .map(|_| {
            let mut idx: Vec<u32> = (0..nnz.min(d)).map(|_| rng.random_range(1..=d as u32)).collect();
            idx.sort_unstable();
            idx.dedup();
            let pairs: Vec<(u32, f64)> = idx.iter().map(|&i| (i, rng.random_range(-1.0..1.0))).collect();
            let score: f64 = pairs.iter().map(|&(i, v)| hidden[i as usize - 1] * v).sum();
            let mut positive = score >= 0.0;
            if rng.random_bool(flip) {
                positive = !positive;
            }
            let label = if positive { Label::Positive } else { Label::Negative };
            Sample::new(SparseVector::from_pairs(pairs).unwrap(), label)
        })
        .collect();
    Dataset::new(samples, d).unwrap()
}

/// Two well separated clusters: `x = ±(2, 2, …)` plus small noise on the
/// first `d` features, so a margin of 1 is reachable.
pub fn separable(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let s = if positive { 1.0 } else { -1.0 };
            let pairs: Vec<(u32, f64)> = (1..=d as u32).map(|j| (j, s * 2.0 + rng.random_range(-0.3..0.3))).collect();
            let label = if positive { Label::Positive } else { Label::Negative };
            Sample::new(SparseVector::from_pairs(pairs).unwrap(), label)
        })
        .collect();
    Dataset::new(samples, d).unwrap()
}

pub fn write_libsvm(ds: &Dataset, path: &Path) {
    let mut buf = Vec::new();
    ds.write_libsvm(&mut buf).unwrap();
    std::fs::write(path, buf).unwrap();
}

/// Rank-ordered sequential sum, the all-reduce reference.
pub fn ordered_sum(vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vectors[0].clone();
    for v in &vectors[1..] {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    acc
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

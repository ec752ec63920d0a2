//! Hinge-loss SGD kernel for the linear SVM.
//!
//! Objective: `J(w) = ½‖w‖² + C·Σ max(0, 1 − y⟨w, x⟩)`. The per-sample
//! subgradient is `w` when the margin is met and `w − C·y·x` otherwise, and
//! a step is `w ← w − α·∇`, with `α = 1/(1 + t)` for epoch `t`. There is no
//! bias term.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Label, Sample, SparseVector};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SgdError {
    #[error("feature index {index} exceeds weight dimension {dimension}")]
    DimensionMismatch { index: usize, dimension: usize },
    #[error("vector length {got} differs from {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cannot average an empty list of models")]
    NoModels,
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyperParams(String),
}

/// Regularization constant `C` and epoch budget `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub c: f64,
    pub epochs: usize,
}

impl HyperParams {
    pub fn new(c: f64, epochs: usize) -> Result<Self, SgdError> {
        let h = Self { c, epochs };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), SgdError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SgdError::InvalidHyperParams(format!("C = {} must be positive", self.c)));
        }
        if self.epochs < 1 {
            return Err(SgdError::InvalidHyperParams("epoch budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dense weights plus the epoch counter they were produced at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub weights: Vec<f64>,
    pub epoch: usize,
}

impl ModelState {
    pub fn zeros(dimension: usize) -> Self {
        Self {
            weights: vec![0.0; dimension],
            epoch: 0,
        }
    }

    pub fn from_weights(weights: Vec<f64>) -> Self {
        Self { weights, epoch: 0 }
    }

    /// Seeded `N(0, sigma²)` initialization.
    pub fn gaussian(dimension: usize, sigma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
            (0..dimension).map(|_| rng.sample(normal)).collect()
        } else {
            vec![0.0; dimension]
        };
        Self { weights, epoch: 0 }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.weights)
    }
}

pub const DEFAULT_INIT_SIGMA: f64 = 0.01;

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[inline]
fn check_fits(weights: &[f64], x: &SparseVector) -> Result<(), SgdError> {
    match x.max_index() {
        Some(i) if i as usize > weights.len() => Err(SgdError::DimensionMismatch {
            index: i as usize,
            dimension: weights.len(),
        }),
        _ => Ok(()),
    }
}

/// `y·⟨w, x⟩`.
pub fn margin(weights: &[f64], sample: &Sample) -> Result<f64, SgdError> {
    check_fits(weights, &sample.features)?;
    Ok(sample.label.sign() * sample.features.dot(weights))
}

/// `max(0, 1 − y⟨w, x⟩)`.
pub fn hinge(weights: &[f64], sample: &Sample) -> Result<f64, SgdError> {
    Ok((1.0 - margin(weights, sample)?).max(0.0))
}

/// Per-sample subgradient: `w` if the hinge is zero, else `w − C·y·x`.
/// At the kink `y⟨w, x⟩ = 1` the hinge is zero and `w` is returned.
pub fn subgradient(weights: &[f64], sample: &Sample, c: f64) -> Result<Vec<f64>, SgdError> {
    let mut g = weights.to_vec();
    if hinge(weights, sample)? > 0.0 {
        let cy = c * sample.label.sign();
        for (pos, v) in sample.features.iter() {
            g[pos] -= cy * v;
        }
    }
    Ok(g)
}

/// `α(t) = 1 / (1 + t)`.
#[inline]
pub fn learning_rate(epoch: usize) -> f64 {
    1.0 / (1.0 + epoch as f64)
}

/// `w − α·subgradient(w, sample, C)`, leaving the input untouched.
pub fn sgd_step(weights: &[f64], sample: &Sample, c: f64, alpha: f64) -> Result<Vec<f64>, SgdError> {
    let mut w = weights.to_vec();
    sgd_step_in_place(&mut w, sample, c, alpha)?;
    Ok(w)
}

/// In-place form of [`sgd_step`]; produces the same bits.
pub fn sgd_step_in_place(
    weights: &mut [f64],
    sample: &Sample,
    c: f64,
    alpha: f64,
) -> Result<(), SgdError> {
    let active = hinge(weights, sample)? > 0.0;
    if active {
        // Merge-walk the sorted sparse indices so every coordinate computes
        // `w_i − α·g_i` with the same `g_i` as `subgradient`.
        let cy = c * sample.label.sign();
        let feats = &sample.features;
        let mut next = feats.indices().iter().zip(feats.values()).peekable();
        for (i, w) in weights.iter_mut().enumerate() {
            let g = match next.peek() {
                Some(&(&idx, &v)) if idx as usize - 1 == i => {
                    next.next();
                    *w - cy * v
                }
                _ => *w,
            };
            *w -= alpha * g;
        }
    } else {
        for w in weights.iter_mut() {
            *w -= alpha * *w;
        }
    }
    Ok(())
}

pub fn squared_norm(weights: &[f64]) -> f64 {
    weights.iter().map(|w| w * w).sum()
}

/// `½‖w‖² + C·Σ hinge` over `dataset`.
pub fn objective(weights: &[f64], dataset: &Dataset, c: f64) -> Result<f64, SgdError> {
    if dataset.dimension() > weights.len() {
        return Err(SgdError::DimensionMismatch {
            index: dataset.dimension(),
            dimension: weights.len(),
        });
    }
    let mut loss = 0.0;
    for s in dataset.samples() {
        loss += hinge(weights, s)?;
    }
    Ok(0.5 * squared_norm(weights) + c * loss)
}

/// Componentwise sum in list order, starting from a copy of the first vector.
pub fn sum_models(vectors: &[&[f64]]) -> Result<Vec<f64>, SgdError> {
    let (first, rest) = vectors.split_first().ok_or(SgdError::NoModels)?;
    let mut acc = first.to_vec();
    for v in rest {
        if v.len() != acc.len() {
            return Err(SgdError::LengthMismatch {
                expected: acc.len(),
                got: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += x;
        }
    }
    Ok(acc)
}

/// Turns a K-way sum into the mean. Shared by the replica and the
/// distributed trainer so both divide identically.
pub fn mean_from_sum(sum: &mut [f64], count: usize) {
    let k = count as f64;
    for x in sum.iter_mut() {
        *x /= k;
    }
}

/// Unweighted componentwise mean, summed in index order `0..K`.
pub fn average_models(vectors: &[&[f64]]) -> Result<Vec<f64>, SgdError> {
    let mut sum = sum_models(vectors)?;
    mean_from_sum(&mut sum, vectors.len());
    Ok(sum)
}

/// Sign rule; `⟨w, x⟩ = 0` is classified as positive.
pub fn classify(weights: &[f64], features: &SparseVector) -> Result<Label, SgdError> {
    check_fits(weights, features)?;
    Ok(if features.dot(weights) >= 0.0 {
        Label::Positive
    } else {
        Label::Negative
    })
}

/// Counts of a binary confusion matrix, positive class = `+1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.true_negative + self.false_positive + self.false_negative
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (self.true_positive + self.true_negative) as f64 / total as f64
    }
}

pub fn confusion(weights: &[f64], dataset: &Dataset) -> Result<Confusion, SgdError> {
    let mut cm = Confusion::default();
    for s in dataset.samples() {
        match (classify(weights, &s.features)?, s.label) {
            (Label::Positive, Label::Positive) => cm.true_positive += 1,
            (Label::Negative, Label::Negative) => cm.true_negative += 1,
            (Label::Positive, Label::Negative) => cm.false_positive += 1,
            (Label::Negative, Label::Positive) => cm.false_negative += 1,
        }
    }
    Ok(cm)
}

/// Fraction of samples classified correctly.
pub fn accuracy(weights: &[f64], dataset: &Dataset) -> Result<f64, SgdError> {
    Ok(confusion(weights, dataset)?.accuracy())
}

//! Multiple runs from independent Gaussian starting points.

use super::{initial_model, Mode, TrainError, TrainerConfig, TrainingResult};
use crate::dataset::Dataset;

/// Runs `mode` with seeds `seed, seed+1, …, seed+restarts−1`, each with its
/// own Gaussian init, and returns the run with the highest final accuracy
/// on `eval` (earliest on ties). `mean_cv_curve` holds the per-evaluation
/// mean across all runs.
pub fn restart_harness(
    mode: &Mode,
    train: &Dataset,
    eval: &Dataset,
    config: &TrainerConfig,
    restarts: usize,
    sigma: f64,
) -> Result<TrainingResult, TrainError> {
    if restarts < 1 {
        return Err(TrainError::InvalidConfig("restarts must be at least 1".into()));
    }
    let mut best: Option<TrainingResult> = None;
    let mut curve_sum: Vec<f64> = Vec::new();
    for i in 0..restarts {
        let mut cfg = *config;
        cfg.seed = config.seed.wrapping_add(i as u64);
        let init = initial_model(train.dimension(), sigma, cfg.seed);
        let run = mode.run(train, eval, &cfg, &init)?;
        let curve = run.log.cv_curve();
        if i == 0 {
            curve_sum = curve;
        } else {
            for (acc, x) in curve_sum.iter_mut().zip(&curve) {
                *acc += x;
            }
        }
        let score = |r: &TrainingResult| r.log.final_cv_accuracy().unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| score(&run) > score(b)) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart ran");
    if restarts > 1 {
        best.mean_cv_curve = curve_sum.iter().map(|s| s / restarts as f64).collect();
    }
    best.restarts_used = restarts;
    best.log.labels.insert("restarts".into(), restarts.to_string());
    Ok(best)
}

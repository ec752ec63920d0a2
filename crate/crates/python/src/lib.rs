//! Python bindings for `psgd_svm`.
//!
//! Weights cross the boundary as `list[float]`, sparse feature vectors as
//! `list[tuple[int, float]]` with 1-based indices, and labels as `+1` / `-1`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use psgd_svm::cli::model_file::ModelFile;
use psgd_svm::comm::{Backend, SyncGroup, Topology, DEFAULT_SYNC_TIMEOUT};
use psgd_svm::dataset::{self, Label, ParseOptions, Sample, SparseVector, SplitSpec};
use psgd_svm::metrics;
use psgd_svm::sgd::{self, HyperParams, ModelState};
use psgd_svm::trainers::{self, EvalCadence, Mode};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sample(features: Vec<(u32, f64)>, label: f64) -> PyResult<Sample> {
    let label = Label::from_sign(label).ok_or_else(|| value_err(format!("label must be +1 or -1, got {label}")))?;
    Ok(Sample::new(SparseVector::from_pairs(features).map_err(value_err)?, label))
}

/// Labelled sparse samples with a fixed dimension.
#[pyclass(module = "psgd_svm_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Dataset {
    inner: dataset::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (samples, dimension))]
    fn new(samples: Vec<(Vec<(u32, f64)>, f64)>, dimension: usize) -> PyResult<Self> {
        let samples = samples
            .into_iter()
            .map(|(x, y)| sample(x, y))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: dataset::Dataset::new(samples, dimension).map_err(value_err)?,
        })
    }

    /// Parses LIBSVM text.
    #[staticmethod]
    #[pyo3(signature = (text, zero_as_negative = false, dimension = None))]
    fn parse(text: &str, zero_as_negative: bool, dimension: Option<usize>) -> PyResult<Self> {
        let opts = ParseOptions {
            zero_as_negative,
            dimension,
        };
        Ok(Self {
            inner: dataset::parse_libsvm_str(text, &opts).map_err(value_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, zero_as_negative = false, dimension = None))]
    fn load(path: PathBuf, zero_as_negative: bool, dimension: Option<usize>) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text, zero_as_negative, dimension)
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(len={}, dimension={})", self.inner.len(), self.inner.dimension())
    }

    fn labels(&self) -> Vec<f64> {
        self.inner.samples().iter().map(|s| s.label.sign()).collect()
    }

    fn to_libsvm(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_libsvm(&mut buf).map_err(value_err)?;
        String::from_utf8(buf).map_err(value_err)
    }

    /// Seeded shuffle, then contiguous train / cv / test parts.
    #[pyo3(signature = (train = 0.6, cv = 0.2, test = 0.2, seed = 0))]
    fn split(&self, train: f64, cv: f64, test: f64, seed: u64) -> PyResult<(Dataset, Dataset, Dataset)> {
        let spec = SplitSpec::new(train, cv, test, seed).map_err(value_err)?;
        let s = dataset::split(&self.inner, &spec).map_err(value_err)?;
        Ok((Dataset { inner: s.train }, Dataset { inner: s.cv }, Dataset { inner: s.test }))
    }

    /// Shuffles with `seed` and cuts into `k` equal shards, dropping the remainder.
    fn partition(&self, k: usize, seed: u64) -> PyResult<Vec<Dataset>> {
        Ok(dataset::partition(&self.inner, k, seed)
            .map_err(value_err)?
            .into_iter()
            .map(|inner| Dataset { inner })
            .collect())
    }
}

#[pyclass(module = "psgd_svm_py", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct TrainerConfig {
    pub c: f64,
    pub epochs: usize,
    pub block_size: usize,
    pub parallelism: usize,
    pub seed: u64,
    pub eval_cadence: String,
    pub reshuffle_each_epoch: bool,
}

impl TrainerConfig {
    fn to_core(&self) -> PyResult<trainers::TrainerConfig> {
        let hyper = HyperParams::new(self.c, self.epochs).map_err(value_err)?;
        Ok(trainers::TrainerConfig {
            hyper,
            block_size: self.block_size,
            parallelism: self.parallelism,
            seed: self.seed,
            eval_cadence: self.eval_cadence.parse::<EvalCadence>().map_err(value_err)?,
            reshuffle_each_epoch: self.reshuffle_each_epoch,
        })
    }
}

#[pymethods]
impl TrainerConfig {
    #[new]
    #[pyo3(signature = (c = 1.0, epochs = 10, block_size = 1, parallelism = 1, seed = 0, eval_cadence = "per-epoch", reshuffle_each_epoch = false))]
    fn new(
        c: f64,
        epochs: usize,
        block_size: usize,
        parallelism: usize,
        seed: u64,
        eval_cadence: &str,
        reshuffle_each_epoch: bool,
    ) -> PyResult<Self> {
        let cfg = Self {
            c,
            epochs,
            block_size,
            parallelism,
            seed,
            eval_cadence: eval_cadence.to_string(),
            reshuffle_each_epoch,
        };
        cfg.to_core()?;
        Ok(cfg)
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainerConfig(c={}, epochs={}, block_size={}, parallelism={}, seed={}, eval_cadence='{}', reshuffle_each_epoch={})",
            self.c,
            self.epochs,
            self.block_size,
            self.parallelism,
            self.seed,
            self.eval_cadence,
            if self.reshuffle_each_epoch { "True" } else { "False" }
        )
    }
}

#[pyclass(module = "psgd_svm_py", frozen)]
pub struct TrainingResult {
    inner: trainers::TrainingResult,
}

#[pymethods]
impl TrainingResult {
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.final_model.weights.clone()
    }

    #[getter]
    fn restarts_used(&self) -> usize {
        self.inner.restarts_used
    }

    #[getter]
    fn syncs(&self) -> u64 {
        self.inner.log.totals.syncs
    }

    #[getter]
    fn final_cv_accuracy(&self) -> Option<f64> {
        self.inner.log.final_cv_accuracy()
    }

    #[getter]
    fn final_objective(&self) -> Option<f64> {
        self.inner.log.final_objective()
    }

    #[getter]
    fn cv_curve(&self) -> Vec<f64> {
        self.inner.log.cv_curve()
    }

    #[getter]
    fn mean_cv_curve(&self) -> Vec<f64> {
        self.inner.mean_cv_curve.clone()
    }

    /// Full metrics log as JSON.
    fn log_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.log).map_err(value_err)
    }

    /// Summary (totals, per-worker totals, labels) as JSON.
    fn summary_json(&self) -> String {
        metrics::summary_json(&self.inner.log).to_string()
    }

    /// Writes the per-sync CSV and its JSON sidecar; returns the sidecar path.
    fn write_csv(&self, path: PathBuf) -> PyResult<PathBuf> {
        metrics::emit_csv(&self.inner.log, &path).map_err(|e| PyIOError::new_err(e.to_string()))
    }
}

fn group(k: usize, backend: &str, topology: &str, timeout_secs: Option<u64>) -> PyResult<SyncGroup> {
    let backend = match backend {
        "inproc" => Backend::InProc,
        "socket" => Backend::Socket {
            coordinator: "127.0.0.1:0".into(),
            topology: topology.parse::<Topology>().map_err(value_err)?,
        },
        other => return Err(value_err(format!("unknown backend `{other}` (expected inproc or socket)"))),
    };
    Ok(SyncGroup {
        size: k,
        backend,
        timeout: timeout_secs.map(Duration::from_secs).unwrap_or(DEFAULT_SYNC_TIMEOUT),
    })
}

/// Trains with `mode` in `seq`, `replica` or `dist`. The distributed mode
/// hosts all workers in this process over the chosen backend.
#[pyfunction]
#[pyo3(signature = (mode, train, eval, config, restarts = 1, sigma = sgd::DEFAULT_INIT_SIGMA, backend = "inproc", topology = "star", timeout_secs = None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    mode: &str,
    train: &Dataset,
    eval: &Dataset,
    config: &TrainerConfig,
    restarts: usize,
    sigma: f64,
    backend: &str,
    topology: &str,
    timeout_secs: Option<u64>,
) -> PyResult<TrainingResult> {
    let cfg = config.to_core()?;
    let mode = match mode {
        "seq" => Mode::Sequential,
        "replica" => Mode::Replica,
        "dist" => Mode::Distributed(group(cfg.parallelism, backend, topology, timeout_secs)?),
        other => return Err(value_err(format!("unknown mode `{other}` (expected seq, replica or dist)"))),
    };
    let (train, eval) = (&train.inner, &eval.inner);
    let result = py
        .detach(|| trainers::restart_harness(&mode, train, eval, &cfg, restarts, sigma))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(TrainingResult { inner: result })
}

#[pyfunction]
fn accuracy(weights: Vec<f64>, data: &Dataset) -> PyResult<f64> {
    sgd::accuracy(&weights, &data.inner).map_err(value_err)
}

/// `½‖w‖² + C · Σ hinge`.
#[pyfunction]
fn objective(weights: Vec<f64>, data: &Dataset, c: f64) -> PyResult<f64> {
    sgd::objective(&weights, &data.inner, c).map_err(value_err)
}

#[pyfunction]
fn predict(weights: Vec<f64>, data: &Dataset) -> PyResult<Vec<f64>> {
    data.inner
        .samples()
        .iter()
        .map(|s| sgd::classify(&weights, &s.features).map(Label::sign).map_err(value_err))
        .collect()
}

#[pyfunction]
fn hinge(weights: Vec<f64>, features: Vec<(u32, f64)>, label: f64) -> PyResult<f64> {
    sgd::hinge(&weights, &sample(features, label)?).map_err(value_err)
}

#[pyfunction]
fn subgradient(weights: Vec<f64>, features: Vec<(u32, f64)>, label: f64, c: f64) -> PyResult<Vec<f64>> {
    sgd::subgradient(&weights, &sample(features, label)?, c).map_err(value_err)
}

/// One update `w − α·g` on a single sample.
#[pyfunction]
fn sgd_step(weights: Vec<f64>, features: Vec<(u32, f64)>, label: f64, c: f64, alpha: f64) -> PyResult<Vec<f64>> {
    sgd::sgd_step(&weights, &sample(features, label)?, c, alpha).map_err(value_err)
}

#[pyfunction]
fn learning_rate(epoch: usize) -> f64 {
    sgd::learning_rate(epoch)
}

#[pyfunction]
fn average_models(models: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let refs: Vec<&[f64]> = models.iter().map(Vec::as_slice).collect();
    sgd::average_models(&refs).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (dimension, sigma = sgd::DEFAULT_INIT_SIGMA, seed = 0))]
fn initial_model(dimension: usize, sigma: f64, seed: u64) -> Vec<f64> {
    trainers::initial_model(dimension, sigma, seed).weights
}

/// Sums `vectors[r]` over a K-member group with one thread per rank; every
/// rank's result is returned.
#[pyfunction]
#[pyo3(signature = (vectors, backend = "inproc", topology = "star"))]
fn allreduce_sum(py: Python<'_>, vectors: Vec<Vec<f64>>, backend: &str, topology: &str) -> PyResult<Vec<Vec<f64>>> {
    let group = group(vectors.len(), backend, topology, None)?;
    py.detach(|| {
        let handles = group.connect_local()?;
        std::thread::scope(|s| {
            let joins: Vec<_> = handles
                .into_iter()
                .zip(&vectors)
                .map(|(mut h, v)| s.spawn(move || h.allreduce_sum(v)))
                .collect();
            joins.into_iter().map(|j| j.join().expect("allreduce thread panicked")).collect::<Result<Vec<_>, _>>()
        })
    })
    .map_err(|e: psgd_svm::comm::CommError| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (path, weights, config = None, labels = None))]
fn save_model(
    path: PathBuf,
    weights: Vec<f64>,
    config: Option<&TrainerConfig>,
    labels: Option<BTreeMap<String, String>>,
) -> PyResult<()> {
    let cfg = match config {
        Some(c) => c.to_core()?,
        None => trainers::TrainerConfig::default(),
    };
    ModelFile::new(&ModelState::from_weights(weights), &cfg, labels.unwrap_or_default())
        .save(&path)
        .map_err(|e| PyIOError::new_err(e.to_string()))
}

#[pyfunction]
fn load_model(path: PathBuf) -> PyResult<Vec<f64>> {
    let file = ModelFile::load(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok(file.model().map_err(value_err)?.weights)
}

#[pymodule]
fn psgd_svm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<TrainerConfig>()?;
    m.add_class::<TrainingResult>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(hinge, m)?)?;
    m.add_function(wrap_pyfunction!(subgradient, m)?)?;
    m.add_function(wrap_pyfunction!(sgd_step, m)?)?;
    m.add_function(wrap_pyfunction!(learning_rate, m)?)?;
    m.add_function(wrap_pyfunction!(average_models, m)?)?;
    m.add_function(wrap_pyfunction!(initial_model, m)?)?;
    m.add_function(wrap_pyfunction!(allreduce_sum, m)?)?;
    m.add_function(wrap_pyfunction!(save_model, m)?)?;
    m.add_function(wrap_pyfunction!(load_model, m)?)?;
    Ok(())
}

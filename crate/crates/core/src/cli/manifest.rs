//! Run configuration: command-line flags over an optional TOML file over
//! built-in defaults.
//!
//! ```toml
//! [data]
//! path = "ijcnn1.tr"          # relative paths resolve against this file
//! name = "ijcnn1"
//! dimension = 22
//! zero_as_negative = false
//!
//! [split]
//! fractions = "60/20/20"
//! seed = 7
//!
//! [trainer]
//! mode = "seq"                # seq | replica | dist
//! c = 1.0
//! epochs = 20
//! k = 4
//! block = 512
//! seed = 7
//! eval_cadence = "per-epoch"  # every-sync | per-epoch | every-N
//! eval_on = "cv"              # cv | train
//! reshuffle_epochs = false
//! restarts = 5
//! sigma = 0.01
//!
//! [backend]
//! kind = "inproc"             # inproc | socket
//! coordinator = "127.0.0.1:7070"
//! topology = "star"           # star | ring
//! sync_timeout_secs = 30
//!
//! [output]
//! dir = "runs"
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::ValueEnum;
use serde::Deserialize;

use super::args::{BackendKind, EvalOn, ModeKind, RunArgs};
use super::CliError;
use crate::comm::{Backend, SyncGroup, Topology};
use crate::dataset::{ParseOptions, SplitSpec};
use crate::sgd::{HyperParams, DEFAULT_INIT_SIGMA};
use crate::trainers::{EvalCadence, Mode, TrainerConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub name: Option<String>,
    pub dimension: Option<usize>,
    pub zero_as_negative: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub fractions: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    pub mode: Option<String>,
    pub c: Option<f64>,
    pub epochs: Option<usize>,
    pub k: Option<usize>,
    pub block: Option<usize>,
    pub seed: Option<u64>,
    pub eval_cadence: Option<String>,
    pub eval_on: Option<String>,
    pub reshuffle_epochs: Option<bool>,
    pub restarts: Option<usize>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: Option<String>,
    pub coordinator: Option<String>,
    pub topology: Option<String>,
    pub sync_timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl ConfigFile {
    /// Reads `path`, resolving relative paths inside it against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config: cannot read {}: {e}", path.display())))?;
        let mut cfg: ConfigFile =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config: {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        rebase(&mut cfg.data.path);
        rebase(&mut cfg.output.dir);
        Ok(cfg)
    }
}

pub const DEFAULT_EPOCHS: usize = 10;
pub const DEFAULT_SPLIT: &str = "60/20/20";
pub const DEFAULT_COORDINATOR: &str = "127.0.0.1:7070";

/// Fully resolved run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub data_path: PathBuf,
    pub dataset_name: String,
    pub parse: ParseOptions,
    pub split: SplitSpec,
    pub mode: ModeKind,
    pub trainer: TrainerConfig,
    pub eval_on: EvalOn,
    pub restarts: usize,
    pub sigma: f64,
    pub backend: BackendKind,
    pub topology: Topology,
    /// `None` means "not given"; in-process hosting then binds an ephemeral port.
    pub coordinator: Option<String>,
    pub sync_timeout: Duration,
    pub output_dir: PathBuf,
}

fn enum_value<T: ValueEnum>(field: &str, s: &str) -> Result<T, CliError> {
    T::from_str(s, false).map_err(|_| CliError::Usage(format!("config: invalid {field} `{s}`")))
}

impl RunManifest {
    pub fn resolve(args: &RunArgs, mode: Option<ModeKind>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let data_path = args
            .data
            .clone()
            .or(file.data.path)
            .ok_or_else(|| CliError::Usage("dataset: no data file given (use --data)".into()))?;
        let dataset_name = args
            .dataset_name
            .clone()
            .or(file.data.name)
            .unwrap_or_else(|| {
                data_path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "data".into())
            });
        let parse = ParseOptions {
            zero_as_negative: args.zero_as_negative || file.data.zero_as_negative.unwrap_or(false),
            dimension: args.dimension.or(file.data.dimension),
        };

        let seed = args.seed.or(file.trainer.seed).unwrap_or(0);
        let mut split = match (&args.split, &file.split.fractions) {
            (Some(s), _) => *s,
            (None, Some(s)) => s
                .parse()
                .map_err(|e| CliError::Usage(format!("config: split: {e}")))?,
            (None, None) => DEFAULT_SPLIT.parse().expect("default split is valid"),
        };
        split.seed = args.split_seed.or(file.split.seed).unwrap_or(seed);

        let mode = match (mode, &file.trainer.mode) {
            (Some(m), _) => m,
            (None, Some(s)) => enum_value("mode", s)?,
            (None, None) => ModeKind::Seq,
        };
        let eval_cadence = match (args.eval_cadence, &file.trainer.eval_cadence) {
            (Some(c), _) => c,
            (None, Some(s)) => s.parse().map_err(|e| CliError::Usage(format!("config: {e}")))?,
            (None, None) => EvalCadence::default(),
        };
        let eval_on = match (args.eval_on, &file.trainer.eval_on) {
            (Some(e), _) => e,
            (None, Some(s)) => enum_value("eval_on", s)?,
            (None, None) => EvalOn::Cv,
        };
        let trainer = TrainerConfig {
            hyper: HyperParams {
                c: args.c.or(file.trainer.c).unwrap_or(1.0),
                epochs: args.epochs.or(file.trainer.epochs).unwrap_or(DEFAULT_EPOCHS),
            },
            block_size: args.block.or(file.trainer.block).unwrap_or(1),
            parallelism: args.k.or(file.trainer.k).unwrap_or(1),
            seed,
            eval_cadence,
            reshuffle_each_epoch: args.reshuffle_epochs || file.trainer.reshuffle_epochs.unwrap_or(false),
        };
        trainer
            .hyper
            .validate()
            .map_err(|e| CliError::Usage(format!("trainers: {e}")))?;

        let backend = match (args.backend, &file.backend.kind) {
            (Some(b), _) => b,
            (None, Some(s)) => enum_value("backend", s)?,
            (None, None) => BackendKind::Inproc,
        };
        let topology = match (args.topology, &file.backend.topology) {
            (Some(t), _) => t,
            (None, Some(s)) => s.parse().map_err(|e| CliError::Usage(format!("config: {e}")))?,
            (None, None) => Topology::Star,
        };
        let timeout_secs = args.sync_timeout_secs.or(file.backend.sync_timeout_secs).unwrap_or(30);
        if timeout_secs == 0 {
            return Err(CliError::Usage("comm: sync timeout must be positive".into()));
        }
        let restarts = args.restarts.or(file.trainer.restarts).unwrap_or(1);
        if restarts == 0 {
            return Err(CliError::Usage("trainers: restarts must be at least 1".into()));
        }
        let sigma = args.sigma.or(file.trainer.sigma).unwrap_or(DEFAULT_INIT_SIGMA);
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(CliError::Usage(format!("trainers: sigma {sigma} must be non-negative")));
        }

        Ok(Self {
            data_path,
            dataset_name,
            parse,
            split,
            mode,
            trainer,
            eval_on,
            restarts,
            sigma,
            backend,
            topology,
            coordinator: args.coordinator.clone().or(file.backend.coordinator),
            sync_timeout: Duration::from_secs(timeout_secs),
            output_dir: args.out.clone().or(file.output.dir).unwrap_or_else(|| PathBuf::from(".")),
        })
    }

    /// Group for hosting all K workers in this process.
    pub fn local_group(&self, k: usize) -> SyncGroup {
        let backend = match self.backend {
            BackendKind::Inproc => Backend::InProc,
            BackendKind::Socket => Backend::Socket {
                coordinator: self.coordinator.clone().unwrap_or_else(|| "127.0.0.1:0".into()),
                topology: self.topology,
            },
        };
        SyncGroup {
            size: k,
            backend,
            timeout: self.sync_timeout,
        }
    }

    pub fn trainer_mode(&self, k: usize) -> Mode {
        match self.mode {
            ModeKind::Seq => Mode::Sequential,
            ModeKind::Replica => Mode::Replica,
            ModeKind::Dist => Mode::Distributed(self.local_group(k)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(
            &cfg,
            "[data]\npath = \"d.svm\"\n[trainer]\nmode = \"replica\"\nc = 2.0\nepochs = 4\nk = 3\n[split]\nfractions = \"80/10/10\"\n",
        )
        .unwrap();
        let args = RunArgs {
            config: Some(cfg),
            epochs: Some(9),
            ..RunArgs::default()
        };
        let m = RunManifest::resolve(&args, None).unwrap();
        assert_eq!(m.data_path, dir.path().join("d.svm"));
        assert_eq!(m.dataset_name, "d");
        assert_eq!(m.mode, ModeKind::Replica);
        assert_eq!(m.trainer.hyper.c, 2.0);
        assert_eq!(m.trainer.hyper.epochs, 9);
        assert_eq!(m.trainer.parallelism, 3);
        assert_eq!(m.trainer.block_size, 1);
        assert_eq!(m.split.train, 0.8);
        assert_eq!(m.restarts, 1);
        let m = RunManifest::resolve(&args, Some(ModeKind::Dist)).unwrap();
        assert_eq!(m.mode, ModeKind::Dist);
    }

    #[test]
    fn bad_config_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.toml");
        std::fs::write(&cfg, "[trainer]\nlearning_rate = 3\n").unwrap();
        let args = RunArgs {
            config: Some(cfg),
            data: Some("x".into()),
            ..RunArgs::default()
        };
        assert!(matches!(RunManifest::resolve(&args, None), Err(CliError::Usage(_))));
        assert!(matches!(RunManifest::resolve(&RunArgs::default(), None), Err(CliError::Usage(_))));
    }
}

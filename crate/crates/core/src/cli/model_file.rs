//! Saved models: one JSON document whose `weights` field is the base64 of
//! the little-endian f64 components, so files are readable and bit-exact.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sgd::ModelState;
use crate::trainers::TrainerConfig;

pub const MODEL_FORMAT: &str = "psgd-svm-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot access model file {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("model file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a model file (format `{0}`)")]
    UnknownFormat(String),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("weight payload is corrupt: {0}")]
    BadPayload(String),
    #[error("weight payload has {got} components, header says {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub dimension: usize,
    pub epoch: usize,
    pub config: TrainerConfig,
    pub labels: BTreeMap<String, String>,
    pub weights: String,
}

impl ModelFile {
    pub fn new(model: &ModelState, config: &TrainerConfig, labels: BTreeMap<String, String>) -> Self {
        let bytes: Vec<u8> = model.weights.iter().flat_map(|w| w.to_le_bytes()).collect();
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            dimension: model.weights.len(),
            epoch: model.epoch,
            config: *config,
            labels,
            weights: STANDARD.encode(bytes),
        }
    }

    pub fn model(&self) -> Result<ModelState, ModelFileError> {
        let bytes = STANDARD
            .decode(&self.weights)
            .map_err(|e| ModelFileError::BadPayload(e.to_string()))?;
        if bytes.len() % 8 != 0 {
            return Err(ModelFileError::BadPayload(format!("{} bytes is not a whole number of f64s", bytes.len())));
        }
        let weights: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if weights.len() != self.dimension {
            return Err(ModelFileError::LengthMismatch {
                expected: self.dimension,
                got: weights.len(),
            });
        }
        Ok(ModelState {
            weights,
            epoch: self.epoch,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelFileError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(ModelFileError::UnknownFormat(file.format));
        }
        if file.version != MODEL_VERSION {
            return Err(ModelFileError::UnsupportedVersion(file.version));
        }
        file.model()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        std::fs::write(path, self.to_json()).map_err(|source| ModelFileError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelFileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

//! Versioned JSON checkpoints.
//!
//! Floats are written in shortest round-trip form, so `load(save(c)) == c`
//! holds bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use gradguard::model::Params;
use gradguard::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const CHECKPOINT_FORMAT: &str = "gradguard-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub params: Params,
    pub train: TrainConfig,
    /// Fingerprint of the training set, annotations included.
    pub dataset_fingerprint: String,
    pub metrics: BTreeMap<String, f64>,
}

impl Checkpoint {
    pub fn new(params: Params, train: TrainConfig, dataset_fingerprint: String) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            params,
            train,
            dataset_fingerprint,
            metrics: BTreeMap::new(),
        }
    }

    pub fn with_metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.into(), value);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        if let Some((k, _)) = self.metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(HarnessError::config(format!("metric `{k}` is not finite")));
        }
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::output("<checkpoint>", e))
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Checkpoint> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| HarnessError::output(origin, e))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(HarnessError::output(
                origin,
                format!(
                    "expected {CHECKPOINT_FORMAT} version {CHECKPOINT_VERSION}, found {} version {}",
                    c.format, c.version
                ),
            ));
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| HarnessError::output(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(HarnessError::MissingPath(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::output(path, e))?;
        Checkpoint::from_json(&text, path)
    }
}

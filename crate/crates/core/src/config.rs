//! Run configuration shared by every subcommand: one JSON document with
//! `model`, `data`, `training` and `eval` sections. Every field has a
//! default and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::GenConfig;
use crate::eval::Metric;
use crate::model::ModelConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Read { path: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Training dataset (directory or JSONL); the command line may override it.
    pub train: Option<PathBuf>,
    /// Validation dataset; the training set is used when absent.
    pub val: Option<PathBuf>,
    /// Generator profile name used by `gen-data` (`desk` or `paper-geometry`).
    pub profile: String,
    /// Full generator settings; overrides `profile` when present.
    pub generator: Option<GenConfig>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            val: None,
            profile: "desk".into(),
            generator: None,
        }
    }
}

impl DataConfig {
    pub fn gen_config(&self) -> Result<GenConfig, ConfigError> {
        match &self.generator {
            Some(g) => Ok(g.clone()),
            None => GenConfig::profile(&self.profile).ok_or_else(|| {
                ConfigError::Invalid(format!("unknown generator profile {:?}", self.profile))
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Shuffle the training order every epoch.
    pub shuffle: bool,
    /// Save the latest checkpoint every this many epochs (and at the end).
    pub checkpoint_every: usize,
    /// Validate every this many epochs (and at the end); 0 validates only at the end.
    pub validate_every: usize,
    /// Cap on the number of validation samples.
    pub val_limit: Option<usize>,
    /// Stop early once validation TEDS reaches this value (and TEDS-struct
    /// reaches `target_val_teds_struct` when both are set).
    pub target_val_teds: Option<f64>,
    /// Stop early once validation TEDS-struct reaches this value.
    pub target_val_teds_struct: Option<f64>,
    /// Stop after the epoch during which this many seconds have elapsed.
    pub time_limit_secs: Option<u64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 4,
            seed: 0,
            shuffle: true,
            checkpoint_every: 1,
            validate_every: 1,
            val_limit: None,
            target_val_teds: None,
            target_val_teds_struct: None,
            time_limit_secs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub metrics: Vec<Metric>,
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metrics: Metric::ALL.to_vec(),
            iou_threshold: 0.5,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.data
            .gen_config()?
            .validate()
            .map_err(ConfigError::Invalid)?;
        if self.training.batch_size == 0 {
            return Err(ConfigError::Invalid(
                "training.batch_size must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.eval.iou_threshold) {
            return Err(ConfigError::Invalid(
                "eval.iou_threshold must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

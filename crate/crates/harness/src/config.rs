//! Experiment files: flat TOML, one key per setting.
//!
//! ```toml
//! name = "moons"
//! seed = 0
//! epochs = 200
//! batch_size = 32
//! train_fraction = 0.8
//!
//! widths = [2, 32, 32, 2]
//! activation = "relu"
//!
//! dataset = "moons"          # blobs | moons | csv
//! n = 1000
//! noise = 0.2
//!
//! optimizer = "adamw"
//! lr = 0.001
//! weight_decay = 0.0001
//! agr = true
//! agr_until_epoch = 100
//! ```
//!
//! Dataset keys: `blobs` takes `n`, `classes`, `dim`, `spread`; `moons`
//! takes `n`, `noise`; `csv` takes `csv_path` (relative to the config
//! file) and `label_column`. `data_seed` defaults to `seed`.
//!
//! Optimizer keys not given fall back to the optimizer's defaults. Other
//! optional keys: `out`, `record_wall_time` (default true), `lr_schedule`
//! (`constant` or `linear`), `lr_final_fraction`, `agr_roles`,
//! `clip_norm`, `centralize`, `dampening`, `beta1`..`beta3`, `eps`.

use std::path::{Path, PathBuf};

use agr_core::agr::{AgrSchedule, ParamRole};
use agr_core::nn::Activation;
use agr_core::optim::{OptimizerConfig, OptimizerKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BlobsParams, MoonsParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Blobs(BlobsParams),
    Moons(MoonsParams),
    Csv { path: PathBuf, label_column: String },
}

/// Per-epoch learning-rate multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// From 1 at the first epoch down to `final_fraction` at the last.
    Linear { final_fraction: f64 },
}

impl LrSchedule {
    pub fn multiplier(&self, epoch: u64, epochs: u64) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Linear { final_fraction } => {
                let span = epochs.saturating_sub(1).max(1) as f64;
                let progress = (epoch as f64 / span).min(1.0);
                1.0 - (1.0 - final_fraction) * progress
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelSpec,
    pub dataset: DatasetSpec,
    pub optimizer: OptimizerConfig,
    pub lr_schedule: LrSchedule,
    pub epochs: u64,
    pub batch_size: usize,
    pub train_fraction: f64,
    /// Seeds initialization and batch order.
    pub seed: u64,
    /// Seeds dataset generation and the train/test split.
    pub data_seed: u64,
    pub out: Option<PathBuf>,
    /// When false every record's `wall_ms` is 0, making output files
    /// byte-for-byte reproducible.
    pub record_wall_time: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    seed: Option<u64>,
    data_seed: Option<u64>,
    epochs: Option<u64>,
    batch_size: Option<usize>,
    train_fraction: Option<f64>,
    out: Option<PathBuf>,
    record_wall_time: Option<bool>,

    widths: Option<Vec<usize>>,
    activation: Option<String>,

    dataset: Option<String>,
    n: Option<usize>,
    classes: Option<usize>,
    dim: Option<usize>,
    spread: Option<f64>,
    noise: Option<f64>,
    csv_path: Option<PathBuf>,
    label_column: Option<String>,

    optimizer: Option<String>,
    lr: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    beta3: Option<f64>,
    eps: Option<f64>,
    weight_decay: Option<f64>,
    clip_norm: Option<f64>,
    centralize: Option<bool>,
    dampening: Option<bool>,
    agr: Option<bool>,
    agr_until_epoch: Option<u64>,
    agr_roles: Option<Vec<ParamRole>>,
    lr_schedule: Option<String>,
    lr_final_fraction: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl ExperimentConfig {
    /// Parses a config; relative `csv_path`s resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        Self::from_raw(raw, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml_str(&text, base)?;
        if cfg.name.is_empty() {
            cfg.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(cfg)
    }

    fn from_raw(r: RawConfig, base_dir: &Path) -> Result<Self> {
        let seed = r.seed.unwrap_or(0);
        let data_seed = r.data_seed.unwrap_or(seed);

        let widths = r.widths.ok_or(ConfigError::Missing("widths"))?;
        if widths.len() < 2 || widths.contains(&0) {
            return Err(invalid(format!(
                "widths must list at least two positive sizes, got {widths:?}"
            )));
        }
        let activation: Activation = r
            .activation
            .as_deref()
            .unwrap_or("relu")
            .parse()
            .map_err(|e: agr_core::nn::NnError| invalid(e.to_string()))?;

        let kind = r.dataset.ok_or(ConfigError::Missing("dataset"))?;
        let reject = |key: &str, present: bool| -> Result<()> {
            if present {
                Err(invalid(format!("key `{key}` does not apply to dataset `{kind}`")))
            } else {
                Ok(())
            }
        };
        let dataset = match kind.as_str() {
            "blobs" => {
                reject("noise", r.noise.is_some())?;
                reject("csv_path", r.csv_path.is_some())?;
                reject("label_column", r.label_column.is_some())?;
                DatasetSpec::Blobs(BlobsParams {
                    n: r.n.ok_or(ConfigError::Missing("n"))?,
                    classes: r.classes.unwrap_or(2),
                    dim: r.dim.unwrap_or(2),
                    spread: r.spread.unwrap_or(1.0),
                    seed: data_seed,
                })
            }
            "moons" => {
                for (key, present) in [
                    ("classes", r.classes.is_some()),
                    ("dim", r.dim.is_some()),
                    ("spread", r.spread.is_some()),
                    ("csv_path", r.csv_path.is_some()),
                    ("label_column", r.label_column.is_some()),
                ] {
                    reject(key, present)?;
                }
                DatasetSpec::Moons(MoonsParams {
                    n: r.n.ok_or(ConfigError::Missing("n"))?,
                    noise: r.noise.unwrap_or(0.1),
                    seed: data_seed,
                })
            }
            "csv" => {
                for (key, present) in [
                    ("n", r.n.is_some()),
                    ("classes", r.classes.is_some()),
                    ("dim", r.dim.is_some()),
                    ("spread", r.spread.is_some()),
                    ("noise", r.noise.is_some()),
                ] {
                    reject(key, present)?;
                }
                let path = r.csv_path.ok_or(ConfigError::Missing("csv_path"))?;
                DatasetSpec::Csv {
                    path: if path.is_relative() { base_dir.join(path) } else { path },
                    label_column: r.label_column.unwrap_or_else(|| "label".to_string()),
                }
            }
            other => return Err(invalid(format!("unknown dataset `{other}`"))),
        };

        let kind: OptimizerKind = r
            .optimizer
            .as_deref()
            .ok_or(ConfigError::Missing("optimizer"))?
            .parse()
            .map_err(|e: agr_core::optim::OptimError| invalid(e.to_string()))?;
        let d = OptimizerConfig::new(kind);
        let mut agr = if r.agr.unwrap_or(false) {
            AgrSchedule::on()
        } else {
            AgrSchedule::off()
        };
        agr.until_epoch = r.agr_until_epoch;
        if let Some(roles) = r.agr_roles {
            agr = agr.with_roles(roles);
        }
        let optimizer = OptimizerConfig {
            kind,
            lr: r.lr.unwrap_or(d.lr),
            beta1: r.beta1.unwrap_or(d.beta1),
            beta2: r.beta2.unwrap_or(d.beta2),
            beta3: r.beta3.unwrap_or(d.beta3),
            eps: r.eps.unwrap_or(d.eps),
            weight_decay: r.weight_decay.unwrap_or(d.weight_decay),
            agr,
            clip_norm: r.clip_norm,
            centralize: r.centralize.unwrap_or(d.centralize),
            dampening: r.dampening.unwrap_or(d.dampening),
            adan_v_uses_regularized_prev: d.adan_v_uses_regularized_prev,
        };
        optimizer.validate().map_err(|e| invalid(e.to_string()))?;

        let lr_schedule = match r.lr_schedule.as_deref().unwrap_or("constant") {
            "constant" => {
                if r.lr_final_fraction.is_some() {
                    return Err(invalid("`lr_final_fraction` needs lr_schedule = \"linear\""));
                }
                LrSchedule::Constant
            }
            "linear" => {
                let f = r.lr_final_fraction.unwrap_or(0.0);
                if !(0.0..=1.0).contains(&f) {
                    return Err(invalid(format!("lr_final_fraction {f} outside [0, 1]")));
                }
                LrSchedule::Linear { final_fraction: f }
            }
            other => return Err(invalid(format!("unknown lr_schedule `{other}`"))),
        };

        let cfg = Self {
            name: r.name.unwrap_or_default(),
            model: ModelSpec { widths, activation },
            dataset,
            optimizer,
            lr_schedule,
            epochs: r.epochs.ok_or(ConfigError::Missing("epochs"))?,
            batch_size: r.batch_size.unwrap_or(32),
            train_fraction: r.train_fraction.unwrap_or(0.8),
            seed,
            data_seed,
            out: r.out,
            record_wall_time: r.record_wall_time.unwrap_or(true),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(invalid(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        let w = &self.model.widths;
        if w.len() < 2 || w.contains(&0) {
            return Err(invalid(format!("invalid widths {w:?}")));
        }
        let expect = match &self.dataset {
            DatasetSpec::Blobs(p) => Some((p.dim, p.classes)),
            DatasetSpec::Moons(_) => Some((2, 2)),
            DatasetSpec::Csv { .. } => None,
        };
        if let Some((dim, classes)) = expect {
            if w[0] != dim || w[w.len() - 1] != classes {
                return Err(invalid(format!(
                    "widths {w:?} must start at the input dimension {dim} and end at {classes} classes"
                )));
            }
        }
        self.optimizer.validate().map_err(|e| invalid(e.to_string()))
    }

    /// Same run with AGR switched on or off, keeping its cutoff and roles.
    pub fn with_agr_enabled(&self, enabled: bool) -> Self {
        let mut c = self.clone();
        c.optimizer.agr.enabled = enabled;
        c
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }
}

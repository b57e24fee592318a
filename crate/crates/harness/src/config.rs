//! Run configuration file (TOML) and the config hash stamped on artifacts.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tse_core::datagen::GenConfig;
use tse_core::{CoreError, LossWeights, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    /// Training crop length in seconds.
    pub crop_s: f64,
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Use only the first n training items (after loading); unset uses all.
    pub max_train_items: Option<usize>,
    pub adapt_learning_rate: f64,
    pub adapt_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            epochs: 20,
            batch_size: 8,
            seed: 0,
            alpha: 10.0,
            beta: 5.0,
            crop_s: 1.0,
            manifest: None,
            out_dir: PathBuf::from("runs/default"),
            max_train_items: None,
            adapt_learning_rate: 1e-4,
            adapt_epochs: 20,
        }
    }
}

impl TrainConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { alpha: self.alpha, beta: self.beta }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let bad = |field: &'static str, reason: &str| Err(CoreError::InvalidConfig { field, reason: reason.into() });
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(self.adapt_learning_rate > 0.0 && self.adapt_learning_rate.is_finite()) {
            return bad("adapt_learning_rate", "must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.crop_s > 0.0) {
            return bad("crop_s", "must be positive");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha", "must be nonnegative");
        }
        if !(self.beta >= 0.0) {
            return bad("beta", "must be nonnegative");
        }
        Ok(())
    }
}

/// Everything one config file can hold.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub generate: GenConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CoreError::InvalidConfig {
            field: "config",
            reason: e.message().to_string() + &e.span().map(|s| format!(" (at byte {})", s.start)).unwrap_or_default(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        self.model.validate()?;
        self.train.validate()?;
        self.generate.validate()
    }
}

/// Short hex digest over the model config and the learning settings that
/// shape a trained checkpoint (paths and epoch counts excluded).
pub fn config_hash(model: &ModelConfig, train: &TrainConfig) -> String {
    let key = serde_json::json!({
        "model": model,
        "learning_rate": train.learning_rate,
        "batch_size": train.batch_size,
        "seed": train.seed,
        "alpha": train.alpha,
        "beta": train.beta,
        "crop_s": train.crop_s,
    });
    let digest = Sha256::digest(key.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

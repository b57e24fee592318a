#![allow(dead_code)]

use std::path::PathBuf;

use tempfile::TempDir;
use tse_core::datagen::manifest::Split;
use tse_core::datagen::{build_dataset, GenConfig};
use tse_core::datagen::manifest::LoadedItem;
use tse_core::{FusionMode, ModelConfig, MultitaskMode};
use tse_harness::data::load_split;
use tse_harness::TrainConfig;

pub struct Fixture {
    pub dir: TempDir,
    pub manifest: PathBuf,
}

impl Fixture {
    pub fn split(&self, split: Split) -> Vec<LoadedItem> {
        load_split(&self.manifest, split).unwrap()
    }
}

pub fn gen_config() -> GenConfig {
    GenConfig {
        visual_dim: ModelConfig::micro().visual_dim,
        train_speakers: 4,
        dev_speakers: 2,
        eval_speakers: 2,
        train_pairs: 6,
        dev_pairs: 2,
        eval_pairs: 2,
        adapt_speakers: 4,
        adapt_train_pairs: 2,
        adapt_eval_pairs: 1,
        ..GenConfig::default()
    }
}

pub fn fixture(seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let summary = build_dataset(&gen_config(), &dir.path().join("data"), seed).unwrap();
    Fixture { manifest: summary.manifest, dir }
}

pub fn micro(fusion: FusionMode, multitask: MultitaskMode) -> ModelConfig {
    ModelConfig::micro().with_modes(fusion, multitask)
}

pub fn train_config(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 4, learning_rate: 1e-3, ..TrainConfig::default() }
}

/// TOML for the CLI matching `gen_config` and the micro network.
pub fn toml(extra: &str) -> String {
    format!(
        r#"[model]
encoder_channels = 8
encoder_kernel = 16
bottleneck = 8
hidden = 16
blocks = 2
repeats = 1
embed_dim = 8
visual_dim = 6

[generate]
visual_dim = 6
train_speakers = 4
dev_speakers = 2
eval_speakers = 2
train_pairs = 2
dev_pairs = 1
eval_pairs = 1
adapt_speakers = 4
adapt_train_pairs = 1
adapt_eval_pairs = 1
{extra}
"#
    )
}

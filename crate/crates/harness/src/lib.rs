//! Dataset generation, training, adaptation, evaluation and diagnostics
//! driven by one TOML configuration.

pub mod attn;
pub mod config;
pub mod data;
pub mod eval;
pub mod gradcheck;
pub mod train;

pub use config::{config_hash, RunConfig, TrainConfig};

//! Audio-visual target speaker extraction: the extraction network, modality
//! fusion, training objectives and a synthetic corrupted-clue dataset
//! generator.

pub mod checkpoint;
pub mod checks;
pub mod config;
pub mod corruption;
pub mod datagen;
pub mod error;
pub mod fusion;
pub mod model;
pub mod objectives;

pub use config::{FusionMode, ModelConfig, MultitaskMode};
pub use corruption::{ClueCondition, MaskKind, MaskSpec};
pub use error::{CoreError, Result};
pub use fusion::{AttentionParams, FusionOutput, FusionVars};
pub use model::{ClueBundle, ExtractionModel, ForwardOptions, ForwardVars, FusionOverride, Modality};
pub use objectives::{LossTerms, LossWeights, OracleTargets, Predictions};

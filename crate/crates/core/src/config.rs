use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// How the audio and visual clue embeddings are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    Audio,
    Visual,
    Sum,
    Attention,
    NormAttention,
}

impl FusionMode {
    pub const ALL: [FusionMode; 5] =
        [FusionMode::Audio, FusionMode::Visual, FusionMode::Sum, FusionMode::Attention, FusionMode::NormAttention];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Audio => "audio",
            FusionMode::Visual => "visual",
            FusionMode::Sum => "sum",
            FusionMode::Attention => "attention",
            FusionMode::NormAttention => "norm-attention",
        }
    }

    pub fn uses_audio(self) -> bool {
        self != FusionMode::Visual
    }

    pub fn uses_visual(self) -> bool {
        self != FusionMode::Audio
    }

    pub fn is_attention(self) -> bool {
        matches!(self, FusionMode::Attention | FusionMode::NormAttention)
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audio" => Ok(FusionMode::Audio),
            "visual" => Ok(FusionMode::Visual),
            "sum" => Ok(FusionMode::Sum),
            "attention" => Ok(FusionMode::Attention),
            "norm-attention" | "norm_attention" => Ok(FusionMode::NormAttention),
            other => Err(CoreError::InvalidConfig { field: "fusion_mode", reason: format!("unknown mode {other:?}") }),
        }
    }
}

/// Auxiliary training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultitaskMode {
    None,
    Guided,
    ClueAware,
}

impl MultitaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MultitaskMode::None => "none",
            MultitaskMode::Guided => "guided",
            MultitaskMode::ClueAware => "clue-aware",
        }
    }
}

impl fmt::Display for MultitaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MultitaskMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MultitaskMode::None),
            "guided" => Ok(MultitaskMode::Guided),
            "clue-aware" | "clue_aware" => Ok(MultitaskMode::ClueAware),
            other => Err(CoreError::InvalidConfig { field: "multitask_mode", reason: format!("unknown mode {other:?}") }),
        }
    }
}

/// Network hyperparameters. All parameter shapes follow from these fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Encoder channels (N).
    pub encoder_channels: usize,
    /// Encoder kernel length in samples (L); the hop is L/2.
    pub encoder_kernel: usize,
    /// Bottleneck channels (B).
    pub bottleneck: usize,
    /// Channels inside each conv block (H).
    pub hidden: usize,
    /// Depthwise kernel of each conv block (P).
    pub block_kernel: usize,
    /// Blocks per repeat (X); dilation cycles 1, 2, .., 2^(X-1).
    pub blocks: usize,
    /// Repeats (R).
    pub repeats: usize,
    /// Number of separator blocks applied before the clue is injected.
    pub fuse_after_blocks: usize,
    /// Clue embedding width (D_e). Must equal `bottleneck`.
    pub embed_dim: usize,
    /// Visual feature width (D_v).
    pub visual_dim: usize,
    /// Attention sharpening factor (epsilon).
    pub epsilon_sharpen: f64,
    pub fusion_mode: FusionMode,
    pub multitask_mode: MultitaskMode,
    pub sample_rate: u32,
    pub visual_fps: u32,
    /// Kernel sizes of the conv stack shared by all cluenets.
    pub clue_kernels: Vec<usize>,
    /// Hidden width of the reliability predictors; 0 means `embed_dim`.
    pub predictor_hidden: usize,
}

fn default_clue_kernels() -> Vec<usize> {
    vec![7, 5, 5]
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        ModelConfig {
            encoder_channels: 64,
            encoder_kernel: 16,
            bottleneck: 64,
            hidden: 128,
            block_kernel: 3,
            blocks: 4,
            repeats: 2,
            fuse_after_blocks: 1,
            embed_dim: 64,
            visual_dim: 32,
            epsilon_sharpen: 2.0,
            fusion_mode: FusionMode::NormAttention,
            multitask_mode: MultitaskMode::Guided,
            sample_rate: 8000,
            visual_fps: 25,
            clue_kernels: default_clue_kernels(),
            predictor_hidden: 0,
        }
    }

    /// Tiny network used for end-to-end gradient checks.
    pub fn micro() -> Self {
        ModelConfig {
            encoder_channels: 8,
            encoder_kernel: 16,
            bottleneck: 8,
            hidden: 16,
            blocks: 2,
            repeats: 1,
            embed_dim: 8,
            visual_dim: 6,
            ..ModelConfig::desk()
        }
    }

    /// Reduced network for the multi-seed trend runs on one CPU core.
    pub fn trend() -> Self {
        ModelConfig {
            encoder_channels: 32,
            encoder_kernel: 32,
            bottleneck: 32,
            hidden: 64,
            blocks: 3,
            repeats: 1,
            embed_dim: 32,
            ..ModelConfig::desk()
        }
    }

    pub fn with_modes(mut self, fusion: FusionMode, multitask: MultitaskMode) -> Self {
        self.fusion_mode = fusion;
        self.multitask_mode = multitask;
        self
    }

    pub fn hop(&self) -> usize {
        self.encoder_kernel / 2
    }

    pub fn total_blocks(&self) -> usize {
        self.blocks * self.repeats
    }

    pub fn predictor_width(&self) -> usize {
        if self.predictor_hidden == 0 {
            self.embed_dim
        } else {
            self.predictor_hidden
        }
    }

    /// Encoder frame count for a waveform of `samples` samples.
    pub fn frames_for(&self, samples: usize) -> Option<usize> {
        if samples < self.encoder_kernel {
            return None;
        }
        Some((samples - self.encoder_kernel) / self.hop() + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, usize); 10] = [
            ("encoder_channels", self.encoder_channels),
            ("encoder_kernel", self.encoder_kernel),
            ("bottleneck", self.bottleneck),
            ("hidden", self.hidden),
            ("block_kernel", self.block_kernel),
            ("blocks", self.blocks),
            ("repeats", self.repeats),
            ("embed_dim", self.embed_dim),
            ("visual_dim", self.visual_dim),
            ("sample_rate", self.sample_rate as usize),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(CoreError::InvalidConfig { field, reason: "must be positive".into() });
            }
        }
        if self.visual_fps == 0 {
            return Err(CoreError::InvalidConfig { field: "visual_fps", reason: "must be positive".into() });
        }
        if self.encoder_kernel % 2 != 0 {
            return Err(CoreError::InvalidConfig {
                field: "encoder_kernel",
                reason: format!("must be even, got {}", self.encoder_kernel),
            });
        }
        if self.block_kernel % 2 == 0 {
            return Err(CoreError::InvalidConfig { field: "block_kernel", reason: "must be odd".into() });
        }
        if self.fuse_after_blocks >= self.total_blocks() {
            return Err(CoreError::InvalidConfig {
                field: "fuse_after_blocks",
                reason: format!("must be below blocks*repeats = {}", self.total_blocks()),
            });
        }
        if self.embed_dim != self.bottleneck {
            return Err(CoreError::InvalidConfig {
                field: "embed_dim",
                reason: format!("must equal bottleneck ({})", self.bottleneck),
            });
        }
        if !(self.epsilon_sharpen > 0.0 && self.epsilon_sharpen.is_finite()) {
            return Err(CoreError::InvalidConfig { field: "epsilon_sharpen", reason: "must be positive".into() });
        }
        if self.clue_kernels.is_empty() || self.clue_kernels.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(CoreError::InvalidConfig { field: "clue_kernels", reason: "need one or more odd kernels".into() });
        }
        Ok(())
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Side of the square face region masks are drawn in, in pixels.
pub const FACE_SIZE: u32 = 188;
/// Perimeter of a full-face mask.
pub const FULL_PERIMETER: u32 = 4 * FACE_SIZE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    None,
    Rect,
    Full,
    IntermittentFull,
}

impl MaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskKind::None => "none",
            MaskKind::Rect => "rect",
            MaskKind::Full => "full",
            MaskKind::IntermittentFull => "intermittent_full",
        }
    }
}

/// Occlusion applied to a visual clue.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub width: u32,
    pub height: u32,
    /// Masked visual-frame indices; only used by `IntermittentFull`.
    #[serde(default)]
    pub frame_schedule: Vec<usize>,
}

impl MaskSpec {
    pub fn none() -> Self {
        MaskSpec { kind: MaskKind::None, width: 0, height: 0, frame_schedule: Vec::new() }
    }

    pub fn rect(width: u32, height: u32) -> Self {
        MaskSpec { kind: MaskKind::Rect, width, height, frame_schedule: Vec::new() }
    }

    pub fn full() -> Self {
        MaskSpec { kind: MaskKind::Full, width: FACE_SIZE, height: FACE_SIZE, frame_schedule: Vec::new() }
    }

    pub fn intermittent(schedule: Vec<usize>) -> Self {
        MaskSpec { kind: MaskKind::IntermittentFull, width: FACE_SIZE, height: FACE_SIZE, frame_schedule: schedule }
    }

    pub fn validate(&self, n_frames: usize) -> Result<()> {
        let bad = |msg: String| Err(CoreError::MaskOutOfRange(msg));
        match self.kind {
            MaskKind::None => Ok(()),
            MaskKind::Rect => {
                if self.width == 0 || self.height == 0 || self.width > FACE_SIZE || self.height > FACE_SIZE {
                    return bad(format!("rect {}x{} outside the {FACE_SIZE}x{FACE_SIZE} face", self.width, self.height));
                }
                Ok(())
            }
            MaskKind::Full | MaskKind::IntermittentFull => {
                if self.width != FACE_SIZE || self.height != FACE_SIZE {
                    return bad(format!("full mask must be {FACE_SIZE}x{FACE_SIZE}, got {}x{}", self.width, self.height));
                }
                if self.kind == MaskKind::IntermittentFull {
                    if let Some(&f) = self.frame_schedule.iter().find(|&&f| f >= n_frames) {
                        return bad(format!("scheduled frame {f} beyond {n_frames} frames"));
                    }
                    if self.frame_schedule.windows(2).any(|w| w[0] >= w[1]) {
                        return bad("frame schedule must be strictly increasing".into());
                    }
                }
                Ok(())
            }
        }
    }

    /// Mask perimeter in pixels for each of `n_frames` visual frames.
    pub fn perimeters(&self, n_frames: usize) -> Result<Vec<u32>> {
        self.validate(n_frames)?;
        Ok(match self.kind {
            MaskKind::None => vec![0; n_frames],
            MaskKind::Rect | MaskKind::Full => vec![2 * (self.width + self.height); n_frames],
            MaskKind::IntermittentFull => {
                let mut p = vec![0; n_frames];
                for &f in &self.frame_schedule {
                    p[f] = FULL_PERIMETER;
                }
                p
            }
        })
    }

    /// Per-frame flag: is any part of the face occluded.
    pub fn occluded_frames(&self, n_frames: usize) -> Result<Vec<bool>> {
        Ok(self.perimeters(n_frames)?.into_iter().map(|p| p > 0).collect())
    }
}

/// Clue condition that determines the oracle attention target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClueCondition {
    BothClean,
    AudioDead,
    VisualDead,
    Partial,
}

impl ClueCondition {
    pub fn as_str(self) -> &'static str {
        match self {
            ClueCondition::BothClean => "both_clean",
            ClueCondition::AudioDead => "audio_dead",
            ClueCondition::VisualDead => "visual_dead",
            ClueCondition::Partial => "partial",
        }
    }

    /// Classify a corruption. Any other combination counts as partial.
    pub fn classify(mask: &MaskSpec, snr_db: Option<f64>) -> Self {
        let audio_clean = snr_db.is_none();
        let audio_dead = snr_db.is_some_and(|s| s <= -20.0);
        match (mask.kind, audio_clean, audio_dead) {
            (MaskKind::None, true, _) => ClueCondition::BothClean,
            (MaskKind::Full, true, _) => ClueCondition::VisualDead,
            (MaskKind::None, false, true) => ClueCondition::AudioDead,
            _ => ClueCondition::Partial,
        }
    }
}

impl fmt::Display for ClueCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClueCondition {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both_clean" => Ok(ClueCondition::BothClean),
            "audio_dead" => Ok(ClueCondition::AudioDead),
            "visual_dead" => Ok(ClueCondition::VisualDead),
            "partial" => Ok(ClueCondition::Partial),
            other => Err(CoreError::UnknownCondition(other.to_string())),
        }
    }
}

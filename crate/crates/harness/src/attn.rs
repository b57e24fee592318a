//! Per-frame attention traces.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;
use tse_core::datagen::manifest::LoadedItem;
use tse_core::objectives::repeat_to_frames;
use tse_core::ExtractionModel;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub frame: usize,
    pub attention_audio: f64,
    pub attention_visual: f64,
    /// Norm rescale `l`; 1 for conventional attention.
    pub scale: f64,
    /// Occluded fraction of the face at this frame.
    pub visual_corruption: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttentionTrace {
    pub item: String,
    pub config_hash: String,
    pub rows: Vec<TraceRow>,
}

impl AttentionTrace {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        writeln!(f, "# item={} config_hash={}", self.item, self.config_hash)?;
        let mut w = csv::Writer::from_writer(f);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean audio attention over occluded and over clean frames.
    pub fn occlusion_means(&self) -> (Option<f64>, Option<f64>) {
        let mean = |occluded: bool| {
            let v: Vec<f64> =
                self.rows.iter().filter(|r| (r.visual_corruption > 0.0) == occluded).map(|r| r.attention_audio).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        (mean(true), mean(false))
    }
}

/// Run `model` on one item and record its fusion weights per encoder frame.
pub fn attention_trace(model: &ExtractionModel<f32>, config_hash: &str, item: &LoadedItem) -> Result<AttentionTrace> {
    let mode = model.config().fusion_mode;
    if !mode.is_attention() {
        bail!("no attention to trace: fusion mode is {}", mode.as_str());
    }
    let (_, fusion) = model.extract(&item.mixture, &item.clues)?;
    let frames = fusion.weights.len();
    let corruption = repeat_to_frames(&item.entry.oracle.r_visual, frames)?;
    let rows = (0..frames)
        .map(|t| TraceRow {
            frame: t,
            attention_audio: fusion.weights[t][0] as f64,
            attention_visual: fusion.weights[t][1] as f64,
            scale: fusion.scale.get(t).map_or(1.0, |&s| s as f64),
            visual_corruption: corruption[t],
        })
        .collect();
    Ok(AttentionTrace { item: item.entry.id.clone(), config_hash: config_hash.to_string(), rows })
}

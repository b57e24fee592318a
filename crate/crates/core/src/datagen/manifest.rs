//! JSON-lines manifest, item loading and dataset self-consistency checks.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::io::{read_avf, read_wav};
use crate::corruption::{ClueCondition, MaskSpec};
use crate::error::{CoreError, Result};
use crate::model::ClueBundle;
use crate::objectives::OracleTargets;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Eval,
    AdaptTrain,
    AdaptEval,
}

impl Split {
    pub const ALL: [Split; 5] = [Split::Train, Split::Dev, Split::Eval, Split::AdaptTrain, Split::AdaptEval];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Eval => "eval",
            Split::AdaptTrain => "adapt_train",
            Split::AdaptEval => "adapt_eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Paths relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemPaths {
    pub mixture: String,
    pub target: String,
    pub interferer: String,
    pub audio_clue: String,
    pub visual_clue: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    /// Index of the clean mixture/clue pair this item derives from.
    pub pair: usize,
    pub paths: ItemPaths,
    /// Condition label, e.g. `none/clean`, `intermittent/-20dB` or an
    /// adaptation label such as `full_occlusion`.
    pub condition: String,
    pub attention_condition: ClueCondition,
    pub mask: MaskSpec,
    /// `None` for an uncorrupted audio clue.
    pub audio_clue_snr_db: Option<f64>,
    pub sir_db: f64,
    pub target_speaker: usize,
    pub interferer_speaker: usize,
    pub oracle: OracleTargets,
    pub sample_rate: u32,
    pub samples: usize,
    pub visual_frames: usize,
}

/// Label of a visual/audio corruption pair, e.g. `rect80x60/clean`.
pub fn condition_label(mask: &MaskSpec, snr_db: Option<f64>) -> String {
    use crate::corruption::MaskKind;
    let v = match mask.kind {
        MaskKind::None => "none".to_string(),
        MaskKind::Rect => format!("rect{}x{}", mask.width, mask.height),
        MaskKind::Full => "full".to_string(),
        MaskKind::IntermittentFull => "intermittent".to_string(),
    };
    match snr_db {
        None => format!("{v}/clean"),
        Some(s) => format!("{v}/{s}dB"),
    }
}

/// A manifest item with its audio and features loaded.
#[derive(Clone, Debug)]
pub struct LoadedItem {
    pub entry: ManifestEntry,
    pub mixture: Vec<f32>,
    pub target: Vec<f32>,
    pub clues: ClueBundle,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line)
            .map_err(|err| CoreError::Manifest(format!("{}:{}: {err}", path.display(), n + 1)))?;
        out.push(e);
    }
    Ok(out)
}

/// Directory that manifest paths are relative to.
pub fn manifest_root(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn load_item(root: &Path, entry: &ManifestEntry) -> Result<LoadedItem> {
    let wav = |rel: &str| -> Result<Vec<f32>> {
        let (x, sr) = read_wav(&root.join(rel))?;
        if sr != entry.sample_rate {
            return Err(CoreError::Manifest(format!("{}: {rel} is {sr} Hz, expected {}", entry.id, entry.sample_rate)));
        }
        Ok(x)
    };
    let mixture = wav(&entry.paths.mixture)?;
    let target = wav(&entry.paths.target)?;
    let audio = wav(&entry.paths.audio_clue)?;
    let visual = read_avf(&root.join(&entry.paths.visual_clue))?;
    Ok(LoadedItem {
        entry: entry.clone(),
        mixture,
        target,
        clues: ClueBundle {
            audio: Some(audio),
            visual: Some(visual),
            mask: Some(entry.mask.clone()),
            snr_db: entry.audio_clue_snr_db,
        },
    })
}

/// Counts gathered while validating a manifest.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationSummary {
    pub entries: usize,
    pub files_checked: usize,
}

/// Check that every referenced file parses with the declared sizes, that
/// stored oracles equal their recomputation, and that ids are unique.
pub fn validate_manifest(manifest: &Path) -> Result<ValidationSummary> {
    let root = manifest_root(manifest);
    let entries = read_manifest(manifest)?;
    let mut ids = HashSet::new();
    let mut files = HashSet::new();
    for e in &entries {
        let fail = |msg: String| Err(CoreError::Manifest(format!("{}: {msg}", e.id)));
        if !ids.insert(e.id.clone()) {
            return fail("duplicate id".into());
        }
        let item = load_item(&root, e)?;
        for (name, len) in [("mixture", item.mixture.len()), ("target", item.target.len())] {
            if len != e.samples {
                return fail(format!("{name} has {len} samples, expected {}", e.samples));
            }
        }
        let interferer = read_wav(&root.join(&e.paths.interferer))?.0;
        if interferer.len() != e.samples {
            return fail("interferer length".into());
        }
        let v = item.clues.visual.as_ref().expect("loaded");
        if v.shape()[0] != e.visual_frames {
            return fail(format!("visual clue has {} frames, expected {}", v.shape()[0], e.visual_frames));
        }
        let oracle = OracleTargets::from_corruption(&e.mask, e.audio_clue_snr_db, e.visual_frames)?;
        if oracle != e.oracle {
            return fail(format!("stored oracle {:?} differs from recomputed {oracle:?}", e.oracle));
        }
        if ClueCondition::classify(&e.mask, e.audio_clue_snr_db) != e.attention_condition {
            return fail("attention condition does not match the corruption".into());
        }
        files.extend([
            e.paths.mixture.clone(),
            e.paths.target.clone(),
            e.paths.interferer.clone(),
            e.paths.audio_clue.clone(),
            e.paths.visual_clue.clone(),
        ]);
    }
    Ok(ValidationSummary { entries: entries.len(), files_checked: files.len() })
}

/// SHA-256 over every file below `dir`, visited in sorted relative-path
/// order, covering both names and contents.
pub fn tree_hash(dir: &Path) -> Result<String> {
    let mut paths = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CoreError::Io(e.into()))?;
        if entry.file_type().is_file() {
            paths.push(entry.path().to_path_buf());
        }
    }
    let mut h = Sha256::new();
    let mut buf = Vec::new();
    for p in paths {
        let rel = p.strip_prefix(dir).expect("walked below dir");
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0u8]);
        buf.clear();
        File::open(&p)?.read_to_end(&mut buf)?;
        h.update((buf.len() as u64).to_le_bytes());
        h.update(&buf);
    }
    Ok(format!("{:x}", h.finalize()))
}

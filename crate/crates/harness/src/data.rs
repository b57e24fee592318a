//! Manifest slices loaded into memory.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use tse_core::datagen::manifest::{load_item, manifest_root, read_manifest, LoadedItem, Split};

/// Items of `split` in manifest order.
pub fn load_split(manifest: &Path, split: Split) -> Result<Vec<LoadedItem>> {
    let entries = read_manifest(manifest).with_context(|| format!("reading manifest {}", manifest.display()))?;
    let root = manifest_root(manifest);
    let picked: Vec<_> = entries.into_iter().filter(|e| e.split == split).collect();
    picked
        .par_iter()
        .map(|e| load_item(&root, e).with_context(|| format!("loading item {}", e.id)))
        .collect()
}

/// Like [`load_split`] but an empty split is an error.
pub fn load_nonempty(manifest: &Path, split: Split) -> Result<Vec<LoadedItem>> {
    let items = load_split(manifest, split)?;
    if items.is_empty() {
        bail!("manifest {} has no {split} items", manifest.display());
    }
    Ok(items)
}

//! Condition-grid evaluation reports.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use tse_core::datagen::manifest::LoadedItem;
use tse_core::objectives::si_sdr_report;
use tse_core::{ExtractionModel, ForwardOptions, FusionOverride};

use crate::train::item_scores;

/// A trained model under evaluation.
#[derive(Clone, Debug)]
pub struct EvalSystem {
    pub name: String,
    pub model: ExtractionModel<f32>,
    pub config_hash: String,
    pub fusion_override: Option<FusionOverride>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub system: String,
    pub item: String,
    pub condition: String,
    pub si_sdr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub system: String,
    /// One cell per column; `None` when no item has that condition.
    pub cells: Vec<Option<f64>>,
    /// Mean over the cells present.
    pub average: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetadata {
    pub seed: u64,
    pub manifest: String,
    /// System name to config hash; the mixture row has none.
    pub config_hashes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: EvalMetadata,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub items: Vec<ItemScore>,
}

pub const MIXTURE_ROW: &str = "mixture";

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn row(system: &str, columns: &[String], scores: &[ItemScore]) -> ReportRow {
    let cells: Vec<Option<f64>> = columns
        .iter()
        .map(|c| {
            let v: Vec<f64> = scores.iter().filter(|s| s.system == system && &s.condition == c).map(|s| s.si_sdr).collect();
            mean(&v)
        })
        .collect();
    let present: Vec<f64> = cells.iter().flatten().copied().collect();
    ReportRow { system: system.to_string(), average: mean(&present), cells }
}

/// Columns are `grid` in order, followed by any other conditions the items
/// carry (in first-seen order).
pub fn evaluate(
    systems: &[EvalSystem],
    items: &[LoadedItem],
    grid: &[String],
    metadata: EvalMetadata,
) -> Result<EvalReport> {
    let mut columns: Vec<String> = grid.to_vec();
    for it in items {
        if !columns.contains(&it.entry.condition) {
            columns.push(it.entry.condition.clone());
        }
    }
    let mut scores = Vec::new();
    for it in items {
        scores.push(ItemScore {
            system: MIXTURE_ROW.into(),
            item: it.entry.id.clone(),
            condition: it.entry.condition.clone(),
            si_sdr: si_sdr_report(&it.mixture, &it.target)?,
        });
    }
    let mut metadata = metadata;
    for sys in systems {
        let opts = ForwardOptions { fusion_override: sys.fusion_override, predict: false };
        let s = item_scores(&sys.model, items, &opts).with_context(|| format!("evaluating {}", sys.name))?;
        for (it, v) in items.iter().zip(s) {
            scores.push(ItemScore {
                system: sys.name.clone(),
                item: it.entry.id.clone(),
                condition: it.entry.condition.clone(),
                si_sdr: v,
            });
        }
        metadata.config_hashes.insert(sys.name.clone(), sys.config_hash.clone());
    }
    let mut rows = vec![row(MIXTURE_ROW, &columns, &scores)];
    rows.extend(systems.iter().map(|s| row(&s.name, &columns, &scores)));
    Ok(EvalReport { metadata, columns, rows, items: scores })
}

impl EvalReport {
    pub fn row(&self, system: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.system == system)
    }

    pub fn cell(&self, system: &str, condition: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == condition)?;
        self.row(system)?.cells[c]
    }

    /// Rebuild every row from the per-item scores.
    pub fn recompute_rows(&self) -> Vec<ReportRow> {
        self.rows.iter().map(|r| row(&r.system, &self.columns, &self.items)).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(File::create(path)?);
        let hashes: Vec<String> = self.metadata.config_hashes.iter().map(|(k, v)| format!("{k}={v}")).collect();
        w.write_record([format!("# seed={} config_hashes={}", self.metadata.seed, hashes.join(";"))])?;
        let mut header = vec!["system".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("average".into());
        w.write_record(&header)?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "absent".into());
        for r in &self.rows {
            let mut rec = vec![r.system.clone()];
            rec.extend(r.cells.iter().map(|&c| fmt(c)));
            rec.push(fmt(r.average));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Plain-text table for the terminal.
    pub fn render(&self) -> String {
        let mut out = format!("{:<24}", "system");
        for c in &self.columns {
            out += &format!(" {c:>18}");
        }
        out += &format!(" {:>9}\n", "average");
        for r in &self.rows {
            out += &format!("{:<24}", r.system);
            for c in &r.cells {
                out += &match c {
                    Some(v) => format!(" {v:>18.2}"),
                    None => format!(" {:>18}", "absent"),
                };
            }
            out += &match r.average {
                Some(v) => format!(" {v:>9.2}\n"),
                None => format!(" {:>9}\n", "absent"),
            };
        }
        out
    }
}

//! Mini-batch training, dev-set selection and domain adaptation.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use tse_autodiff::{adam_step, AdamConfig, AdamState, Graph, Tensor};
use tse_core::checkpoint::{load_checkpoint, save_checkpoint};
use tse_core::datagen::manifest::LoadedItem;
use tse_core::datagen::ADAPT_CONDITIONS;
use tse_core::objectives::{si_sdr_report, total_loss};
use tse_core::{
    ClueBundle, ClueCondition, ExtractionModel, ForwardOptions, FusionMode, LossWeights, ModelConfig, MultitaskMode, OracleTargets,
};

use crate::config::{config_hash, TrainConfig};

/// One row of the per-epoch log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub sdr_loss: f64,
    pub aux_loss: f64,
    /// Mean dev SI-SDR in dB; NaN without a dev set.
    pub dev_si_sdr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochLog>,
    /// 1-based; 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_dev_si_sdr: f64,
    /// Best-dev model (the last one when there is no dev set).
    pub model: ExtractionModel<f32>,
    pub config_hash: String,
    pub best_path: Option<PathBuf>,
    pub last_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

/// Where a run writes its artifacts; `None` keeps everything in memory.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub name: String,
}

impl RunOutput {
    pub fn new(dir: impl Into<PathBuf>, name: impl Into<String>) -> Self {
        RunOutput { dir: dir.into(), name: name.into() }
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.name))
    }
}

/// Per-item loss weights. Adaptation turns the guided term off for items
/// whose condition has no attention oracle.
#[derive(Clone, Debug)]
pub enum WeightSchedule {
    Constant(LossWeights),
    PerItem(Vec<LossWeights>),
}

impl WeightSchedule {
    fn get(&self, i: usize) -> LossWeights {
        match self {
            WeightSchedule::Constant(w) => *w,
            WeightSchedule::PerItem(v) => v[i],
        }
    }
}

/// Aligned random crop of `crop` samples; the whole item when it is shorter.
fn crop(item: &LoadedItem, crop: usize, hop_v: usize, rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<f32>, ClueBundle, OracleTargets) {
    let n = item.mixture.len();
    let oracle = item.entry.oracle.clone();
    if crop >= n || hop_v == 0 || crop % hop_v != 0 {
        return (item.mixture.clone(), item.target.clone(), item.clues.clone(), oracle);
    }
    let frames_total = item.entry.visual_frames;
    let frames = crop / hop_v;
    let max_start = frames_total.saturating_sub(frames).min((n - crop) / hop_v);
    let f0 = rng.gen_range(0..=max_start);
    let s0 = f0 * hop_v;
    let mut clues = item.clues.clone();
    if let Some(v) = &item.clues.visual {
        let d = v.shape()[1];
        let data = v.data()[f0 * d..(f0 + frames) * d].to_vec();
        clues.visual = Some(Tensor::new(vec![frames, d], data).expect("slice shape"));
    }
    let r_visual = oracle.r_visual[f0..f0 + frames].to_vec();
    (
        item.mixture[s0..s0 + crop].to_vec(),
        item.target[s0..s0 + crop].to_vec(),
        clues,
        OracleTargets { r_visual, ..oracle },
    )
}

/// Mean clamped SI-SDR of `model` over `items`, evaluated in parallel.
pub fn mean_si_sdr(model: &ExtractionModel<f32>, items: &[LoadedItem]) -> Result<f64> {
    let scores = item_scores(model, items, &ForwardOptions::default())?;
    Ok(scores.iter().sum::<f64>() / scores.len().max(1) as f64)
}

/// Clamped SI-SDR per item, in item order.
pub fn item_scores(model: &ExtractionModel<f32>, items: &[LoadedItem], opts: &ForwardOptions) -> Result<Vec<f64>> {
    items
        .par_iter()
        .map(|it| {
            let (est, _) = model.extract_with(&it.mixture, &it.clues, opts).with_context(|| format!("item {}", it.entry.id))?;
            Ok(si_sdr_report(&est, &it.target)?)
        })
        .collect()
}

/// Everything one training run needs besides the data.
#[derive(Clone, Debug)]
pub struct TrainJob {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub schedule: WeightSchedule,
    pub output: Option<RunOutput>,
}

impl TrainJob {
    pub fn new(model: ModelConfig, train: TrainConfig) -> Self {
        let schedule = WeightSchedule::Constant(train.loss_weights());
        TrainJob { learning_rate: train.learning_rate, epochs: train.epochs, model, train, schedule, output: None }
    }

    pub fn with_output(mut self, dir: impl Into<PathBuf>, name: impl Into<String>) -> Self {
        self.output = Some(RunOutput::new(dir, name));
        self
    }
}

/// Train from `init` (or a fresh model seeded by `train.seed`), selecting the
/// checkpoint with the best mean dev SI-SDR.
pub fn train_model(
    job: &TrainJob,
    init: Option<ExtractionModel<f32>>,
    train_items: &[LoadedItem],
    dev_items: &[LoadedItem],
) -> Result<TrainOutcome> {
    job.model.validate()?;
    job.train.validate()?;
    ensure!(!train_items.is_empty(), "no training items");
    ensure!(job.learning_rate > 0.0, "learning rate must be positive");
    if let WeightSchedule::PerItem(v) = &job.schedule {
        ensure!(v.len() == train_items.len(), "weight schedule has {} entries for {} items", v.len(), train_items.len());
    }
    let hash = config_hash(&job.model, &job.train);
    let mut model = match init {
        Some(mut m) => {
            m.set_modes(job.model.fusion_mode, job.model.multitask_mode);
            ensure!(
                strip_modes(m.config()) == strip_modes(&job.model),
                "initial checkpoint architecture differs from the configured model"
            );
            m
        }
        None => ExtractionModel::<f32>::new(job.model.clone(), job.train.seed)?,
    };
    let mode = job.model.multitask_mode;
    let fwd = ForwardOptions { fusion_override: None, predict: mode == MultitaskMode::ClueAware };
    let crop_len = (job.train.crop_s * job.model.sample_rate as f64).round() as usize;
    let hop_v = (job.model.sample_rate / job.model.visual_fps) as usize;
    let adam = AdamConfig::new(job.learning_rate);
    let mut state = AdamState::for_params(model.params());
    let exs = train_items;

    let mut log = match &job.output {
        Some(out) => {
            std::fs::create_dir_all(&out.dir)?;
            let path = out.path("log.csv");
            let mut w = csv::WriterBuilder::new().flexible(true).from_writer(File::create(&path)?);
            w.write_record([format!("# config_hash={hash}")])?;
            w.write_record(["epoch", "train_loss", "sdr_loss", "aux_loss", "dev_si_sdr", "seconds"])?;
            w.flush()?;
            Some((w, path))
        }
        None => None,
    };

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, ExtractionModel<f32>)> = None;
    for epoch in 1..=job.epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(job.train.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..exs.len()).collect();
        order.shuffle(&mut rng);
        let (mut sum_total, mut sum_sdr, mut sum_aux) = (0.0, 0.0, 0.0);
        for (b, batch) in order.chunks(job.train.batch_size).enumerate() {
            model.params_mut().zero_grad();
            for &i in batch {
                let (mix, target, clues, oracle) = crop(&exs[i], crop_len, hop_v, &mut rng);
                let weights = job.schedule.get(i);
                let at = || format!("epoch {epoch}, batch {}, item {}", b + 1, exs[i].entry.id);
                let mut g = Graph::new();
                let out = model.forward(&mut g, &mix, &clues, &fwd).with_context(at)?;
                let terms = total_loss(&mut g, out.estimate, &target, &out.fusion, &out.predictions, &oracle, &weights, mode)
                    .with_context(at)?;
                let total = g.value(terms.total).data()[0] as f64;
                let sdr = g.value(terms.sdr).data()[0] as f64;
                if !total.is_finite() {
                    bail!("non-finite loss at {}", at());
                }
                let grads = g.backward(terms.total).with_context(at)?;
                g.accumulate_param_grads(&grads, model.params_mut());
                sum_total += total;
                sum_sdr += sdr;
                sum_aux += total - sdr;
            }
            model.params_mut().scale_grads(1.0 / batch.len() as f32);
            if !model.params().grads_finite() {
                bail!("non-finite gradient at epoch {epoch}, batch {}", b + 1);
            }
            adam_step(model.params_mut(), &mut state, &adam)?;
        }
        let n = exs.len() as f64;
        let dev = if dev_items.is_empty() { f64::NAN } else { mean_si_sdr(&model, dev_items)? };
        let entry = EpochLog {
            epoch,
            train_loss: sum_total / n,
            sdr_loss: sum_sdr / n,
            aux_loss: sum_aux / n,
            dev_si_sdr: dev,
            seconds: started.elapsed().as_secs_f64(),
        };
        if let Some((w, _)) = &mut log {
            w.write_record([
                entry.epoch.to_string(),
                entry.train_loss.to_string(),
                entry.sdr_loss.to_string(),
                entry.aux_loss.to_string(),
                entry.dev_si_sdr.to_string(),
                format!("{:.3}", entry.seconds),
            ])?;
            w.flush()?;
        }
        let better = match &best {
            None => true,
            Some((_, score, _)) => dev_items.is_empty() || dev > *score,
        };
        if better {
            best = Some((epoch, dev, model.clone()));
        }
        history.push(entry);
    }

    let (best_epoch, best_dev, best_model) = best.unwrap_or((0, f64::NAN, model.clone()));
    let (mut best_path, mut last_path) = (None, None);
    if let Some(out) = &job.output {
        let bp = out.path("best.tsf");
        let lp = out.path("last.tsf");
        save_checkpoint(&bp, &best_model, &hash)?;
        save_checkpoint(&lp, &model, &hash)?;
        best_path = Some(bp);
        last_path = Some(lp);
    }
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_dev_si_sdr: best_dev,
        model: best_model,
        config_hash: hash,
        best_path,
        last_path,
        log_path: log.map(|(_, p)| p),
    })
}

/// Load a checkpoint to continue training; its config hash must match.
pub fn resume_checkpoint(path: &Path, expected_hash: &str) -> Result<ExtractionModel<f32>> {
    let (model, hash) = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    ensure!(
        hash == expected_hash,
        "checkpoint {} has config hash {hash}, current configuration hashes to {expected_hash}",
        path.display()
    );
    Ok(model)
}

fn strip_modes(c: &ModelConfig) -> ModelConfig {
    c.clone().with_modes(FusionMode::Sum, MultitaskMode::None)
}

/// Guided-loss weight per adaptation item: the configured alpha where the
/// condition has an attention oracle, zero for intermittent occlusion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptScheduleRow {
    pub item: String,
    pub condition: String,
    pub oracle: Option<[f64; 2]>,
    pub alpha: f64,
}

pub fn adaptation_schedule(items: &[LoadedItem], weights: LossWeights) -> Result<Vec<AdaptScheduleRow>> {
    items
        .iter()
        .map(|it| {
            let e = &it.entry;
            let (want_condition, oracle) = match e.condition.as_str() {
                "without_occlusion" => (ClueCondition::BothClean, Some([0.5, 0.5])),
                "full_occlusion" => (ClueCondition::VisualDead, Some([1.0, 0.0])),
                "intermittent" => (ClueCondition::Partial, None),
                other => bail!(
                    "adaptation item {} has condition label {other:?}; expected one of {:?}",
                    e.id,
                    ADAPT_CONDITIONS
                ),
            };
            ensure!(
                e.attention_condition == want_condition && e.oracle.attention == oracle,
                "adaptation item {} labelled {} carries oracle {:?}",
                e.id,
                e.condition,
                e.oracle.attention
            );
            let alpha = if oracle.is_some() { weights.alpha } else { 0.0 };
            Ok(AdaptScheduleRow { item: e.id.clone(), condition: e.condition.clone(), oracle, alpha })
        })
        .collect()
}

pub fn write_schedule(path: &Path, rows: &[AdaptScheduleRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["item", "condition", "oracle_audio", "oracle_visual", "alpha"])?;
    for r in rows {
        let (a, v) = r.oracle.map(|[a, v]| (a.to_string(), v.to_string())).unwrap_or_default();
        w.write_record([r.item.clone(), r.condition.clone(), a, v, r.alpha.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct AdaptOutcome {
    pub model: ExtractionModel<f32>,
    pub schedule: Vec<AdaptScheduleRow>,
    pub history: Vec<EpochLog>,
}

/// Fine-tune `model` on labelled adaptation items at the adaptation
/// learning rate. Zero epochs returns the input unchanged.
pub fn adapt_model(
    model: ExtractionModel<f32>,
    train: &TrainConfig,
    epochs: usize,
    items: &[LoadedItem],
    output: Option<RunOutput>,
) -> Result<AdaptOutcome> {
    let schedule = adaptation_schedule(items, train.loss_weights())?;
    if let Some(out) = &output {
        std::fs::create_dir_all(&out.dir)?;
        write_schedule(&out.path("alpha_schedule.csv"), &schedule)?;
    }
    if epochs == 0 {
        if let Some(out) = &output {
            save_checkpoint(&out.path("last.tsf"), &model, &config_hash(model.config(), train))?;
        }
        return Ok(AdaptOutcome { model, schedule, history: Vec::new() });
    }
    let per_item = schedule.iter().map(|r| LossWeights { alpha: r.alpha, beta: train.beta }).collect();
    let mut cfg = train.clone();
    cfg.epochs = epochs;
    let job = TrainJob {
        model: model.config().clone(),
        learning_rate: train.adapt_learning_rate,
        epochs,
        schedule: WeightSchedule::PerItem(per_item),
        output,
        train: cfg,
    };
    let outcome = train_model(&job, Some(model), items, &[])?;
    Ok(AdaptOutcome { model: outcome.model, schedule, history: outcome.history })
}

//! Synthetic audio-visual corpus: parametric speakers, two-speaker mixtures,
//! envelope-locked visual features, clue corruption and manifest emission.

pub mod io;
pub mod manifest;
pub mod signal;
pub mod speaker;
pub mod visual;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tse_autodiff::Tensor;

use crate::corruption::{ClueCondition, MaskSpec, FACE_SIZE};
use crate::error::{CoreError, Result};
use crate::objectives::{si_sdr, OracleTargets};
use manifest::{condition_label, write_manifest, ItemPaths, ManifestEntry, Split};
use speaker::{speaker_pool, synth_utterance, SyntheticSpeaker, VoiceDomain};
use visual::{corrupt_visual, intermittent_schedule, speaker_offset, VisualFeaturizer};

pub const MANIFEST_NAME: &str = "manifest.jsonl";
/// Mixtures whose unprocessed SI-SDR reaches this are regenerated.
pub const MAX_MIXTURE_SDR_DB: f64 = 3.0;

/// Adaptation-domain condition labels.
pub const ADAPT_CONDITIONS: [&str; 3] = ["without_occlusion", "full_occlusion", "intermittent"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub sample_rate: u32,
    pub visual_fps: u32,
    pub visual_dim: usize,
    /// Mixture length in seconds.
    pub duration_s: f64,
    /// Enrollment clue length in seconds.
    pub clue_duration_s: f64,
    pub train_speakers: usize,
    pub dev_speakers: usize,
    pub eval_speakers: usize,
    /// Clean pairs per split; train and dev emit a clean and a corrupted copy of each.
    pub train_pairs: usize,
    pub dev_pairs: usize,
    /// Pairs evaluated under every evaluation column.
    pub eval_pairs: usize,
    /// SIR is drawn uniformly from [-sir_range_db, sir_range_db].
    pub sir_range_db: f64,
    /// Share of corrupted copies whose visual clue is corrupted (the rest corrupt audio).
    pub visual_corruption_fraction: f64,
    /// Share of visual corruptions that mask the full face.
    pub full_mask_fraction: f64,
    /// Share of audio corruptions at -20 dB (the rest are uniform in (-20, 20]).
    pub audio_dead_fraction: f64,
    /// Smallest training rectangle (width, height) in pixels.
    pub rect_min: [u32; 2],
    /// Largest training rectangle (width, height) in pixels.
    pub rect_max: [u32; 2],
    /// Rectangle used by the partial-occlusion evaluation column.
    pub eval_rect: [u32; 2],
    pub intermittent_mean_run: f64,
    pub adapt_speakers: usize,
    pub adapt_train_pairs: usize,
    pub adapt_eval_pairs: usize,
    pub smear_tail_ms: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            sample_rate: 8000,
            visual_fps: 25,
            visual_dim: 32,
            duration_s: 1.0,
            clue_duration_s: 1.0,
            train_speakers: 13,
            dev_speakers: 2,
            eval_speakers: 5,
            train_pairs: 500,
            dev_pairs: 50,
            eval_pairs: 25,
            sir_range_db: 2.5,
            visual_corruption_fraction: 0.5,
            full_mask_fraction: 0.5,
            audio_dead_fraction: 0.5,
            rect_min: [40, 30],
            rect_max: [140, 105],
            eval_rect: [80, 60],
            intermittent_mean_run: 10.0,
            adapt_speakers: 6,
            adapt_train_pairs: 20,
            adapt_eval_pairs: 10,
            smear_tail_ms: 40.0,
        }
    }
}

impl GenConfig {
    /// Ten items in total; for smoke tests.
    pub fn minimal() -> Self {
        GenConfig {
            train_speakers: 3,
            dev_speakers: 2,
            eval_speakers: 2,
            train_pairs: 2,
            dev_pairs: 1,
            eval_pairs: 0,
            adapt_speakers: 4,
            adapt_train_pairs: 1,
            adapt_eval_pairs: 0,
            ..GenConfig::default()
        }
    }

    pub fn total_speakers(&self) -> usize {
        self.train_speakers + self.dev_speakers + self.eval_speakers
    }

    pub fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(CoreError::InvalidConfig { field, reason });
        if self.sample_rate < 2 * self.visual_fps || self.visual_fps == 0 {
            return bad("sample_rate", format!("{} Hz cannot carry {} fps", self.sample_rate, self.visual_fps));
        }
        if self.visual_dim == 0 {
            return bad("visual_dim", "must be positive".into());
        }
        if !(self.duration_s >= 0.5) {
            return bad("duration_s", "must be at least 0.5".into());
        }
        if !(self.clue_duration_s >= 0.5) {
            return bad("clue_duration_s", "must be at least 0.5".into());
        }
        if !(self.sir_range_db >= 0.0 && self.sir_range_db.is_finite()) {
            return bad("sir_range_db", "must be nonnegative".into());
        }
        for (field, v) in [
            ("visual_corruption_fraction", self.visual_corruption_fraction),
            ("full_mask_fraction", self.full_mask_fraction),
            ("audio_dead_fraction", self.audio_dead_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(field, format!("{v} is not a fraction"));
            }
        }
        let in_face = |r: [u32; 2]| r[0] >= 1 && r[1] >= 1 && r[0] <= FACE_SIZE && r[1] <= FACE_SIZE;
        if !in_face(self.rect_min) {
            return bad("rect_min", format!("{:?} outside 1..={FACE_SIZE}", self.rect_min));
        }
        if !in_face(self.rect_max) {
            return bad("rect_max", format!("{:?} outside 1..={FACE_SIZE}", self.rect_max));
        }
        if self.rect_min[0] > self.rect_max[0] || self.rect_min[1] > self.rect_max[1] {
            return bad("rect_max", format!("{:?} smaller than rect_min {:?}", self.rect_max, self.rect_min));
        }
        if !in_face(self.eval_rect) {
            return bad("eval_rect", format!("{:?} outside 1..={FACE_SIZE}", self.eval_rect));
        }
        if !(self.intermittent_mean_run >= 1.0) {
            return bad("intermittent_mean_run", "must be at least 1".into());
        }
        if !(self.smear_tail_ms > 0.0) {
            return bad("smear_tail_ms", "must be positive".into());
        }
        Ok(())
    }
}

/// Visual part of an evaluation column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnMask {
    None,
    Rect(u32, u32),
    Full,
    Intermittent,
}

/// The clue-condition grid every evaluation pair is rendered under.
pub fn eval_columns(cfg: &GenConfig) -> Vec<(ColumnMask, Option<f64>)> {
    let [w, h] = cfg.eval_rect;
    vec![
        (ColumnMask::None, None),
        (ColumnMask::None, Some(0.0)),
        (ColumnMask::None, Some(-20.0)),
        (ColumnMask::Rect(w, h), None),
        (ColumnMask::Full, None),
        (ColumnMask::Intermittent, None),
        (ColumnMask::Intermittent, Some(0.0)),
        (ColumnMask::Intermittent, Some(-20.0)),
    ]
}

/// Column labels in table order.
pub fn eval_column_labels(cfg: &GenConfig) -> Vec<String> {
    eval_columns(cfg)
        .into_iter()
        .map(|(m, s)| {
            let mask = match m {
                ColumnMask::None => MaskSpec::none(),
                ColumnMask::Rect(w, h) => MaskSpec::rect(w, h),
                ColumnMask::Full => MaskSpec::full(),
                ColumnMask::Intermittent => MaskSpec::intermittent(Vec::new()),
            };
            condition_label(&mask, s)
        })
        .collect()
}

/// Corruption applied to the second copy of a training or dev pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrainCorruption {
    VisualFull,
    VisualRect,
    AudioDead,
    AudioRandom,
}

impl TrainCorruption {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainCorruption::VisualFull => "visual_full",
            TrainCorruption::VisualRect => "visual_rect",
            TrainCorruption::AudioDead => "audio_dead",
            TrainCorruption::AudioRandom => "audio_random",
        }
    }
}

/// Exactly proportioned corruption types for `n` copies, in seeded order.
pub fn corruption_plan<R: Rng + ?Sized>(n: usize, cfg: &GenConfig, rng: &mut R) -> Vec<TrainCorruption> {
    let n_visual = (n as f64 * cfg.visual_corruption_fraction).round() as usize;
    let n_full = (n_visual as f64 * cfg.full_mask_fraction).round() as usize;
    let n_dead = ((n - n_visual) as f64 * cfg.audio_dead_fraction).round() as usize;
    let mut plan = Vec::with_capacity(n);
    plan.extend(std::iter::repeat(TrainCorruption::VisualFull).take(n_full));
    plan.extend(std::iter::repeat(TrainCorruption::VisualRect).take(n_visual - n_full));
    plan.extend(std::iter::repeat(TrainCorruption::AudioDead).take(n_dead));
    plan.extend(std::iter::repeat(TrainCorruption::AudioRandom).take(n - n_visual - n_dead));
    plan.shuffle(rng);
    plan
}

/// Rectangle with the 4:3 aspect of the training range, width uniform.
pub fn sample_rect<R: Rng + ?Sized>(cfg: &GenConfig, rng: &mut R) -> MaskSpec {
    let w = rng.gen_range(cfg.rect_min[0]..=cfg.rect_max[0]);
    let (wmin, wmax) = (cfg.rect_min[0] as f64, cfg.rect_max[0] as f64);
    let u = if wmax > wmin { (w as f64 - wmin) / (wmax - wmin) } else { 0.0 };
    let h = (cfg.rect_min[1] as f64 + u * (cfg.rect_max[1] - cfg.rect_min[1]) as f64).round() as u32;
    MaskSpec::rect(w, h)
}

/// Independent generator for `(tag, index)` under a master seed.
pub fn stream_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((tag << 40) | index);
    r
}

/// Evenly spread `k` picks from `items`, returning (picked, rest).
fn stratified_take(items: Vec<usize>, k: usize) -> (Vec<usize>, Vec<usize>) {
    let n = items.len();
    let picks: Vec<usize> = (0..k).map(|j| ((j as f64 + 0.5) * n as f64 / k as f64) as usize).collect();
    let mut taken = Vec::new();
    let mut rest = Vec::new();
    for (i, v) in items.into_iter().enumerate() {
        if picks.contains(&i) {
            taken.push(v);
        } else {
            rest.push(v);
        }
    }
    (taken, rest)
}

/// Speakers of each split, as indices into the relevant pool.
#[derive(Clone, Debug)]
pub struct SpeakerSplits {
    pub standard: Vec<SyntheticSpeaker>,
    pub shifted: Vec<SyntheticSpeaker>,
    pub by_split: BTreeMap<Split, Vec<usize>>,
}

impl SpeakerSplits {
    pub fn new(cfg: &GenConfig, seed: u64) -> Result<Self> {
        let need = cfg.total_speakers();
        if cfg.train_speakers < 2 || cfg.dev_speakers < 2 || cfg.eval_speakers < 2 {
            return Err(CoreError::InsufficientSpeakers { need: 6.max(need), have: need });
        }
        let standard = speaker_pool(need, &VoiceDomain::standard(), stream_rng(seed, 1, 0).gen())?;
        let (eval, rest) = stratified_take((0..need).collect(), cfg.eval_speakers);
        let (dev, train) = stratified_take(rest, cfg.dev_speakers);
        if cfg.adapt_speakers < 4 {
            return Err(CoreError::InsufficientSpeakers { need: 4, have: cfg.adapt_speakers });
        }
        let shifted = speaker_pool(cfg.adapt_speakers, &VoiceDomain::shifted(), stream_rng(seed, 1, 1).gen())?;
        let (adapt_eval, adapt_train) = stratified_take((0..cfg.adapt_speakers).collect(), cfg.adapt_speakers / 2);
        let mut by_split = BTreeMap::new();
        by_split.insert(Split::Train, train);
        by_split.insert(Split::Dev, dev);
        by_split.insert(Split::Eval, eval);
        by_split.insert(Split::AdaptTrain, adapt_train);
        by_split.insert(Split::AdaptEval, adapt_eval);
        Ok(SpeakerSplits { standard, shifted, by_split })
    }

    fn pool(&self, split: Split) -> &[SyntheticSpeaker] {
        match split {
            Split::AdaptTrain | Split::AdaptEval => &self.shifted,
            _ => &self.standard,
        }
    }
}

enum FileData {
    Wav(Vec<f32>),
    Avf(Tensor<f32>),
}

struct Rendered {
    entries: Vec<ManifestEntry>,
    files: Vec<(String, FileData)>,
}

struct Context<'a> {
    cfg: &'a GenConfig,
    seed: u64,
    speakers: &'a SpeakerSplits,
    featurizer: VisualFeaturizer,
    smear: Vec<f64>,
    plans: BTreeMap<Split, Vec<TrainCorruption>>,
}

struct BasePair {
    target_speaker: usize,
    interferer_speaker: usize,
    sir_db: f64,
    mixture: signal::Mixture,
    clue: Vec<f32>,
    visual: Tensor<f32>,
}

fn split_tag(split: Split) -> u64 {
    10 + split as u64
}

impl Context<'_> {
    fn base_pair(&self, split: Split, k: usize) -> Result<BasePair> {
        let cfg = self.cfg;
        let ids = &self.speakers.by_split[&split];
        let pool = self.speakers.pool(split);
        let mut rng = stream_rng(self.seed, split_tag(split), k as u64);
        let ti = rng.gen_range(0..ids.len());
        let mut ii = rng.gen_range(0..ids.len() - 1);
        if ii >= ti {
            ii += 1;
        }
        let (target_spk, interf_spk) = (&pool[ids[ti]], &pool[ids[ii]]);
        let adapt = matches!(split, Split::AdaptTrain | Split::AdaptEval);
        let room = |x: Vec<f32>| if adapt { signal::apply_filter(&x, &self.smear) } else { x };
        let dry_target = synth_utterance(target_spk, cfg.duration_s, rng.gen(), cfg.sample_rate)?;
        let clue = room(synth_utterance(target_spk, cfg.clue_duration_s, rng.gen(), cfg.sample_rate)?);
        let clue = signal::peak_normalize(&clue, speaker::UTTERANCE_PEAK);
        let target = room(dry_target.clone());
        loop {
            let interferer = room(synth_utterance(interf_spk, cfg.duration_s, rng.gen(), cfg.sample_rate)?);
            let sir_db = rng.gen_range(-cfg.sir_range_db..=cfg.sir_range_db);
            let mixture = signal::mix_scaled(&target, &interferer, sir_db)?;
            if si_sdr(&mixture.mixture, &mixture.target)? < MAX_MIXTURE_SDR_DB {
                let offset = speaker_offset(target_spk.seed, cfg.visual_dim);
                let visual = self.featurizer.features(&dry_target, &offset)?;
                return Ok(BasePair {
                    target_speaker: target_spk.id,
                    interferer_speaker: interf_spk.id,
                    sir_db,
                    mixture,
                    clue,
                    visual,
                });
            }
        }
    }

    /// Every item derived from pair `k` of `split`, with the files it needs.
    fn render(&self, split: Split, k: usize) -> Result<Rendered> {
        let cfg = self.cfg;
        let base = self.base_pair(split, k)?;
        let dir = split.as_str();
        let stem = format!("{dir}/p{k:05}");
        let shared = ItemPaths {
            mixture: format!("{stem}_mix.wav"),
            target: format!("{stem}_target.wav"),
            interferer: format!("{stem}_interf.wav"),
            audio_clue: format!("{stem}_clue.wav"),
            visual_clue: format!("{stem}_visual.avf"),
        };
        let mut files = vec![
            (shared.mixture.clone(), FileData::Wav(base.mixture.mixture.clone())),
            (shared.target.clone(), FileData::Wav(base.mixture.target.clone())),
            (shared.interferer.clone(), FileData::Wav(base.mixture.interferer.clone())),
            (shared.audio_clue.clone(), FileData::Wav(base.clue.clone())),
            (shared.visual_clue.clone(), FileData::Avf(base.visual.clone())),
        ];
        let mut rng = stream_rng(self.seed, split_tag(split) + 100, k as u64);
        let frames = base.visual.shape()[0];

        // (suffix, mask, snr, label override)
        let mut variants: Vec<(String, MaskSpec, Option<f64>, Option<String>)> = Vec::new();
        match split {
            Split::Train | Split::Dev => {
                variants.push(("clean".into(), MaskSpec::none(), None, None));
                let kind = self.plans[&split][k];
                let (mask, snr) = match kind {
                    TrainCorruption::VisualFull => (MaskSpec::full(), None),
                    TrainCorruption::VisualRect => (sample_rect(cfg, &mut rng), None),
                    TrainCorruption::AudioDead => (MaskSpec::none(), Some(-20.0)),
                    TrainCorruption::AudioRandom => (MaskSpec::none(), Some(20.0 - 40.0 * rng.gen::<f64>())),
                };
                variants.push(("corrupt".into(), mask, snr, None));
            }
            Split::Eval => {
                for (c, (m, snr)) in eval_columns(cfg).into_iter().enumerate() {
                    let mask = match m {
                        ColumnMask::None => MaskSpec::none(),
                        ColumnMask::Rect(w, h) => MaskSpec::rect(w, h),
                        ColumnMask::Full => MaskSpec::full(),
                        ColumnMask::Intermittent => {
                            MaskSpec::intermittent(intermittent_schedule(frames, cfg.intermittent_mean_run, &mut rng)?)
                        }
                    };
                    variants.push((format!("c{c}"), mask, snr, None));
                }
            }
            Split::AdaptTrain | Split::AdaptEval => {
                for label in ADAPT_CONDITIONS {
                    let mask = match label {
                        "without_occlusion" => MaskSpec::none(),
                        "full_occlusion" => MaskSpec::full(),
                        _ => MaskSpec::intermittent(intermittent_schedule(frames, cfg.intermittent_mean_run, &mut rng)?),
                    };
                    variants.push((label.to_string(), mask, None, Some(label.to_string())));
                }
            }
        }

        let mut entries = Vec::new();
        for (suffix, mask, snr, label) in variants {
            let id = format!("{dir}-{k:05}-{suffix}");
            let mut paths = shared.clone();
            if let Some(s) = snr {
                let noisy = signal::corrupt_audio_clue(&base.clue, s, rng.gen())?;
                paths.audio_clue = format!("{dir}/{id}_clue.wav");
                files.push((paths.audio_clue.clone(), FileData::Wav(signal::peak_normalize(&noisy, 0.9))));
            }
            if mask.kind != crate::corruption::MaskKind::None {
                let (v, _) = corrupt_visual(&base.visual, &mask, self.featurizer.occlusion_token())?;
                paths.visual_clue = format!("{dir}/{id}_visual.avf");
                files.push((paths.visual_clue.clone(), FileData::Avf(v)));
            }
            let oracle = OracleTargets::from_corruption(&mask, snr, frames)?;
            entries.push(ManifestEntry {
                id,
                split,
                pair: k,
                paths,
                condition: label.unwrap_or_else(|| condition_label(&mask, snr)),
                attention_condition: ClueCondition::classify(&mask, snr),
                mask,
                audio_clue_snr_db: snr,
                sir_db: base.sir_db,
                target_speaker: base.target_speaker,
                interferer_speaker: base.interferer_speaker,
                oracle,
                sample_rate: cfg.sample_rate,
                samples: base.mixture.mixture.len(),
                visual_frames: frames,
            });
        }
        Ok(Rendered { entries, files })
    }
}

/// What `build_dataset` wrote.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub manifest: PathBuf,
    pub items: BTreeMap<String, usize>,
    /// Corruption types of the train and dev corrupted copies.
    pub corruption_histogram: BTreeMap<String, usize>,
}

/// Generate the full corpus under `out_dir`. Items are rendered in parallel
/// from per-item seeds and written in a fixed order, so the tree is
/// identical for identical `(cfg, seed)`.
pub fn build_dataset(cfg: &GenConfig, out_dir: &Path, seed: u64) -> Result<DatasetSummary> {
    cfg.validate()?;
    let speakers = SpeakerSplits::new(cfg, seed)?;
    let featurizer = VisualFeaturizer::new(cfg.sample_rate, cfg.visual_fps, cfg.visual_dim, stream_rng(seed, 2, 0).gen())?;
    let smear = signal::smearing_filter(cfg.sample_rate, cfg.smear_tail_ms, stream_rng(seed, 3, 0).gen());
    let mut plans = BTreeMap::new();
    plans.insert(Split::Train, corruption_plan(cfg.train_pairs, cfg, &mut stream_rng(seed, 4, 0)));
    plans.insert(Split::Dev, corruption_plan(cfg.dev_pairs, cfg, &mut stream_rng(seed, 4, 1)));
    let mut corruption_histogram = BTreeMap::new();
    for kind in plans.values().flatten() {
        *corruption_histogram.entry(kind.as_str().to_string()).or_insert(0) += 1;
    }
    let ctx = Context { cfg, seed, speakers: &speakers, featurizer, smear, plans };

    let counts = [
        (Split::Train, cfg.train_pairs),
        (Split::Dev, cfg.dev_pairs),
        (Split::Eval, cfg.eval_pairs),
        (Split::AdaptTrain, cfg.adapt_train_pairs),
        (Split::AdaptEval, cfg.adapt_eval_pairs),
    ];
    let jobs: Vec<(Split, usize)> = counts.iter().flat_map(|&(s, n)| (0..n).map(move |k| (s, k))).collect();
    let rendered: Vec<Rendered> = jobs.par_iter().map(|&(s, k)| ctx.render(s, k)).collect::<Result<_>>()?;

    std::fs::create_dir_all(out_dir)?;
    for (split, _) in counts {
        std::fs::create_dir_all(out_dir.join(split.as_str()))?;
    }
    let mut entries = Vec::new();
    for r in rendered {
        for (rel, data) in &r.files {
            let path = out_dir.join(rel);
            match data {
                FileData::Wav(x) => io::write_wav(&path, x, cfg.sample_rate)?,
                FileData::Avf(t) => io::write_avf(&path, t)?,
            }
        }
        entries.extend(r.entries);
    }
    let manifest = out_dir.join(MANIFEST_NAME);
    write_manifest(&manifest, &entries)?;
    let meta = serde_json::json!({ "seed": seed, "config": cfg });
    std::fs::write(out_dir.join("gen_config.json"), serde_json::to_string_pretty(&meta)?)?;

    let mut items = BTreeMap::new();
    for e in &entries {
        *items.entry(e.split.as_str().to_string()).or_insert(0) += 1;
    }
    Ok(DatasetSummary { manifest, items, corruption_histogram })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_proportions_exact() {
        let cfg = GenConfig::default();
        let plan = corruption_plan(500, &cfg, &mut stream_rng(1, 0, 0));
        for kind in [TrainCorruption::VisualFull, TrainCorruption::VisualRect, TrainCorruption::AudioDead, TrainCorruption::AudioRandom] {
            assert_eq!(plan.iter().filter(|&&k| k == kind).count(), 125);
        }
    }

    #[test]
    fn rects_stay_in_training_range() {
        let cfg = GenConfig::default();
        let mut rng = stream_rng(2, 0, 0);
        for _ in 0..200 {
            let m = sample_rect(&cfg, &mut rng);
            assert!((40..=140).contains(&m.width) && (30..=105).contains(&m.height));
        }
    }

    #[test]
    fn column_labels() {
        let labels = eval_column_labels(&GenConfig::default());
        assert_eq!(
            labels,
            [
                "none/clean",
                "none/0dB",
                "none/-20dB",
                "rect80x60/clean",
                "full/clean",
                "intermittent/clean",
                "intermittent/0dB",
                "intermittent/-20dB"
            ]
        );
    }

    #[test]
    fn invalid_mask_range_names_field() {
        let cfg = GenConfig { rect_max: [200, 105], ..GenConfig::default() };
        match cfg.validate() {
            Err(CoreError::InvalidConfig { field, .. }) => assert_eq!(field, "rect_max"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn speaker_splits_disjoint() {
        let s = SpeakerSplits::new(&GenConfig::default(), 3).unwrap();
        let (tr, dv, ev) = (&s.by_split[&Split::Train], &s.by_split[&Split::Dev], &s.by_split[&Split::Eval]);
        assert_eq!(tr.len() + dv.len() + ev.len(), 20);
        assert!(ev.iter().all(|i| !tr.contains(i) && !dv.contains(i)));
        assert!(dv.iter().all(|i| !tr.contains(i)));
    }
}

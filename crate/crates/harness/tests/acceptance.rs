//! Acceptance suite. Criteria 1-6 are exact property checks; 7-11 train the
//! compared systems on three independently seeded synthetic corpora and need
//! two of three seeds to hold.
//!
//! Runs without the libtest harness so every verdict line is printed.
//! `TSE_ACCEPTANCE_QUICK=1` stops after criterion 6. Reports and logs of the
//! trend runs land under `$CARGO_TARGET_TMPDIR/acceptance`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tse_autodiff::{Graph, Real, Tensor};
use tse_core::datagen::manifest::{tree_hash, LoadedItem, Split};
use tse_core::datagen::signal::{corrupt_audio_clue, ratio_db};
use tse_core::datagen::speaker::{synth_utterance, SyntheticSpeaker, VoiceDomain};
use tse_core::datagen::visual::{coverage_ok, intermittent_schedule};
use tse_core::datagen::{build_dataset, eval_column_labels, GenConfig};
use tse_core::fusion::{attention_fuse, normalized_attention_fuse, AttentionParams};
use tse_core::objectives::{oracle_reliability, si_sdr};
use tse_core::{
    ClueBundle, ExtractionModel, ForwardOptions, FusionMode, FusionOverride, MaskSpec, ModelConfig, MultitaskMode,
};
use tse_harness::attn::attention_trace;
use tse_harness::data::load_nonempty;
use tse_harness::eval::{evaluate, EvalMetadata, EvalReport, EvalSystem, MIXTURE_ROW};
use tse_harness::gradcheck::run_gradcheck_suite;
use tse_harness::train::{adapt_model, mean_si_sdr, train_model, RunOutput, TrainJob};
use tse_harness::TrainConfig;

const TREND_SEEDS: [u64; 3] = [1, 2, 3];
const TREND_EPOCHS: usize = 20;
const WALL_CLOCK_TARGET_S: f64 = 3600.0;

struct Verdict {
    id: usize,
    title: &'static str,
    passed: bool,
    detail: String,
}

impl Verdict {
    fn line(&self) -> String {
        format!("criterion {:>2} {} {}: {}", self.id, if self.passed { "PASS" } else { "FAIL" }, self.title, self.detail)
    }
}

fn errored(id: usize, title: &'static str, e: anyhow::Error) -> Verdict {
    Verdict { id, title, passed: false, detail: format!("error: {e:#}") }
}

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    Tensor::<f64>::randn(&[n], 1.0, rng).into_data()
}

fn random_bundle(cfg: &ModelConfig, clue_len: usize, tv: usize, rng: &mut ChaCha8Rng) -> ClueBundle {
    let audio = Tensor::<f32>::randn(&[clue_len], 0.3, rng).into_data();
    ClueBundle::new(audio, Tensor::randn(&[tv, cfg.visual_dim], 1.0, rng))
}

fn max_abs_diff<F: Real>(a: &[F], b: &[F]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.as_f64() - y.as_f64()).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- criterion 1

fn c1_gradients() -> Result<Verdict> {
    let s = run_gradcheck_suite()?;
    let worst = s.primitives.iter().chain(&s.models).map(|l| l.worst).fold(0.0, f64::max);
    let failing: Vec<&str> = s.primitives.iter().chain(&s.models).filter(|l| !l.passed).map(|l| l.name.as_str()).collect();
    Ok(Verdict {
        id: 1,
        title: "gradient checks",
        passed: s.passed() && s.seconds < 60.0,
        detail: format!(
            "{} primitive kinds, {} model variants (f64), worst rel. error {worst:.2e} (< 1e-4), fixture detected {}, {:.1} s (< 60 s){}",
            s.primitives.len(),
            s.models.len(),
            s.fixture_detected,
            s.seconds,
            if failing.is_empty() { String::new() } else { format!(", failing {failing:?}") }
        ),
    })
}

// ---------------------------------------------------------------- criterion 2

/// Worst disagreement between a fixed-mode model and the same parameters run
/// through forced weights, over extracted waveforms and fused clues.
fn lattice_gap<F: Real>(config: ModelConfig, seed: u64, mix_len: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mix: Vec<F> = Tensor::<F>::randn(&[mix_len], 0.5, &mut rng).into_data();
    let clues = random_bundle(&config, 2000, 10, &mut rng);
    let base = ExtractionModel::<F>::new(config.with_modes(FusionMode::Attention, MultitaskMode::None), seed)?;
    let mut worst = 0.0f64;
    for (mode, w) in [(FusionMode::Sum, [0.5, 0.5]), (FusionMode::Audio, [1.0, 0.0]), (FusionMode::Visual, [0.0, 1.0])] {
        let mut fixed = base.clone();
        fixed.set_modes(mode, MultitaskMode::None);
        let forced = ForwardOptions { fusion_override: Some(FusionOverride::Weights(w)), predict: false };
        let (a, fa) = fixed.extract(&mix, &clues)?;
        let (b, fb) = base.extract_with(&mix, &clues, &forced)?;
        worst = worst.max(max_abs_diff(&a, &b)).max(max_abs_diff(fa.fused.data(), fb.fused.data()));

        // fused clue against a hand-built convex combination of the embeddings
        let mut g = Graph::new();
        let out = fixed.forward(&mut g, &mix, &clues, &ForwardOptions::default())?;
        let fused = g.value(out.fusion.fused).clone();
        let (d, t) = (fused.shape()[0], fused.shape()[1]);
        let za = out.z_audio.map(|v| g.value(v).data().to_vec());
        let zv = out.z_visual.map(|v| g.value(v).data().to_vec());
        for c in 0..d {
            for f in 0..t {
                let a_part = za.as_ref().map_or(0.0, |z| w[0] * z[c].as_f64());
                let v_part = zv.as_ref().map_or(0.0, |z| w[1] * z[c * t + f].as_f64());
                worst = worst.max((fused.data()[c * t + f].as_f64() - (a_part + v_part)).abs());
            }
        }
    }
    Ok(worst)
}

fn c2_lattice() -> Result<Verdict> {
    let mut worst = 0.0f64;
    for seed in 0..4 {
        worst = worst.max(lattice_gap::<f64>(ModelConfig::micro(), seed, 1600)?);
        worst = worst.max(lattice_gap::<f32>(ModelConfig::trend(), seed, 8000)?);
    }
    Ok(Verdict {
        id: 2,
        title: "fusion special-case lattice",
        passed: worst <= 1e-6,
        detail: format!("sum=forced(0.5,0.5), audio=forced(1,0), visual=forced(0,1); max elementwise gap {worst:.2e} (<= 1e-6)"),
    })
}

// ---------------------------------------------------------------- criterion 3

struct ScaleProbe {
    frames: usize,
    differing_frames: usize,
    max_weight_gap: f64,
    scale_changed: bool,
    fused_tracks_scale: bool,
}

/// Scale one clue stream of a real forward pass by `c` and rerun normalized
/// attention on the scaled embeddings.
fn scale_probe<F: Real>(config: ModelConfig, seed: u64, stream: usize, c: f64) -> Result<ScaleProbe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ExtractionModel::<F>::new(config.with_modes(FusionMode::NormAttention, MultitaskMode::Guided), seed)?;
    let mix: Vec<F> = Tensor::<F>::randn(&[4000], 0.5, &mut rng).into_data();
    let clues = random_bundle(model.config(), 2000, 13, &mut rng);
    let mut g = Graph::new();
    let out = model.forward(&mut g, &mix, &clues, &ForwardOptions::default())?;
    let za = g.value(out.z_audio.ok_or_else(|| anyhow!("no audio embedding"))?).clone();
    let zv = g.value(out.z_visual.ok_or_else(|| anyhow!("no visual embedding"))?).clone();
    let zm = g.value(out.z_mix.ok_or_else(|| anyhow!("no mixture embedding"))?).clone();

    let run = |k: f64| -> Result<(Vec<F>, Vec<F>, Vec<F>)> {
        let mut g = Graph::new();
        let p = AttentionParams::bind(&mut g, model.params(), model.config().epsilon_sharpen)?;
        let (mut a, mut v) = (g.constant(za.clone()), g.constant(zv.clone()));
        if stream == 0 {
            a = g.scale(a, k)?;
        } else {
            v = g.scale(v, k)?;
        }
        let m = g.constant(zm.clone());
        let f = normalized_attention_fuse(&mut g, a, v, m, &p)?;
        Ok((g.value(f.weights).data().to_vec(), g.value(f.scale).data().to_vec(), g.value(f.fused).data().to_vec()))
    };
    let (w1, l1, f1) = run(1.0)?;
    let (wc, lc, fc) = run(c)?;
    let t = l1.len();
    let differing_frames = (0..t).filter(|&i| w1[i] != wc[i] || w1[t + i] != wc[t + i]).count();
    let scale_changed = if c == 1.0 { lc == l1 } else { lc.iter().zip(&l1).all(|(a, b)| a != b) };
    // with identical weights the fused clue moves only through l
    let d = f1.len() / t;
    let mut fused_tracks_scale = true;
    for ch in 0..d {
        for i in 0..t {
            let want = f1[ch * t + i].as_f64() * lc[i].as_f64() / l1[i].as_f64();
            let got = fc[ch * t + i].as_f64();
            if (got - want).abs() > 1e-4 * (1.0 + want.abs()) {
                fused_tracks_scale = false;
            }
        }
    }
    Ok(ScaleProbe { frames: t, differing_frames, max_weight_gap: max_abs_diff(&w1, &wc), scale_changed, fused_tracks_scale })
}

fn c3_scale_invariance() -> Result<Verdict> {
    let (mut frames, mut differing) = (0, 0);
    let mut gap = [0.0f64; 2];
    let (mut scale_ok, mut fused_ok) = (true, true);
    let mut per_case = Vec::new();
    for c in [0.01, 1.0, 100.0] {
        for stream in 0..2 {
            let mut case_diff = 0;
            for seed in 0..3 {
                let probes = [scale_probe::<f32>(ModelConfig::trend(), seed, stream, c)?, scale_probe::<f64>(ModelConfig::micro(), seed, stream, c)?];
                for (k, p) in probes.into_iter().enumerate() {
                    frames += p.frames;
                    differing += p.differing_frames;
                    case_diff += p.differing_frames;
                    gap[k] = gap[k].max(p.max_weight_gap);
                    scale_ok &= p.scale_changed;
                    fused_ok &= p.fused_tracks_scale;
                }
            }
            per_case.push(format!("c={c} {}: {case_diff}", ["audio", "visual"][stream]));
        }
    }
    Ok(Verdict {
        id: 3,
        title: "normalized-attention scale invariance",
        passed: differing == 0 && scale_ok && fused_ok,
        detail: format!(
            "frames with non-identical weights {differing}/{frames} [{}], max weight gap f32 {:.1e} / f64 {:.1e}; l trace responds {scale_ok}; fused moves only via l {fused_ok}",
            per_case.join(", "),
            gap[0],
            gap[1]
        ),
    })
}

// ---------------------------------------------------------------- criterion 4

fn simplex_gap<F: Real>(config: ModelConfig, seed: u64, normalized: bool, spread: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ExtractionModel::<F>::new(config.clone(), seed)?;
    let d = config.embed_dim;
    let t = 50;
    let mut g = Graph::new();
    let p = AttentionParams::bind(&mut g, model.params(), config.epsilon_sharpen)?;
    let za = g.constant(Tensor::randn(&[d, 1], spread, &mut rng));
    let zv = g.constant(Tensor::randn(&[d, t], 1.0 / spread, &mut rng));
    let zm = g.constant(Tensor::randn(&[d, t], spread, &mut rng));
    let f = if normalized { normalized_attention_fuse(&mut g, za, zv, zm, &p)? } else { attention_fuse(&mut g, za, zv, zm, &p)? };
    let w = g.value(f.weights).data();
    Ok((0..t).map(|i| (w[i].as_f64() + w[t + i].as_f64() - 1.0).abs()).fold(0.0, f64::max))
}

/// `s + n`, `n` orthogonal to `s`, at `db` dB.
fn orthogonal_mix(s: &[f64], rng: &mut ChaCha8Rng, db: f64) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let raw = gaussian(s.len(), rng);
    let k = dot(&raw, s) / dot(s, s);
    let n: Vec<f64> = raw.iter().zip(s).map(|(r, x)| r - k * x).collect();
    let gain = (dot(s, s) / 10f64.powf(db / 10.0) / dot(&n, &n)).sqrt();
    s.iter().zip(&n).map(|(x, v)| x + gain * v).collect()
}

fn c4_simplex_and_metric() -> Result<Verdict> {
    let mut simplex = 0.0f64;
    for seed in 0..10 {
        for normalized in [false, true] {
            for spread in [1e-3, 1.0, 1e3] {
                simplex = simplex.max(simplex_gap::<f32>(ModelConfig::trend(), seed, normalized, spread)?);
                simplex = simplex.max(simplex_gap::<f64>(ModelConfig::micro(), seed, normalized, spread)?);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut scale_gap = 0.0f64;
    for _ in 0..20 {
        let s = gaussian(4000, &mut rng);
        let noise = gaussian(4000, &mut rng);
        let est: Vec<f64> = s.iter().zip(&noise).map(|(a, b)| a + 0.3 * b).collect();
        let base = si_sdr(&est, &s)?;
        for c in [0.1, 1.0, 10.0, -1.0] {
            let scaled: Vec<f64> = est.iter().map(|x| c * x).collect();
            scale_gap = scale_gap.max((si_sdr(&scaled, &s)? - base).abs());
        }
    }
    let mut closed_form = 0.0f64;
    for db in [-10.0, 0.0, 10.0, 20.0, 30.0] {
        let s = gaussian(4000, &mut rng);
        closed_form = closed_form.max((si_sdr(&orthogonal_mix(&s, &mut rng, db), &s)? - db).abs());
    }
    Ok(Verdict {
        id: 4,
        title: "simplex and metric invariants",
        passed: simplex <= 1e-6 && scale_gap <= 1e-9 && closed_form <= 0.01,
        detail: format!(
            "max |row sum - 1| {simplex:.1e} (<= 1e-6); SI-SDR change under c in {{0.1,1,10,-1}} {scale_gap:.1e} dB; orthogonal-noise error {closed_form:.1e} dB (<= 0.01)"
        ),
    })
}

// ---------------------------------------------------------------- criterion 5

fn c5_oracles() -> Result<Verdict> {
    let full = oracle_reliability(&MaskSpec::full(), None, 25)?.0;
    let rect = oracle_reliability(&MaskSpec::rect(40, 30), None, 25)?.0;
    let audio: Vec<f64> =
        [-20.0, 0.0, 20.0].iter().map(|&s| oracle_reliability(&MaskSpec::none(), Some(s), 1).map(|r| r.1)).collect::<Result<_, _>>()?;
    let ok_full = full.iter().all(|&v| v == 1.0);
    let ok_rect = rect.iter().all(|&v| v == 140.0 / 752.0);
    let ok_audio = audio == [0.0, 0.5, 1.0];
    Ok(Verdict {
        id: 5,
        title: "oracle formulas",
        passed: ok_full && ok_rect && ok_audio,
        detail: format!("full mask r^V = {}, 40x30 r^V = {} (140/752), SNR -20/0/+20 r^A = {audio:?}", full[0], rect[0]),
    })
}

// ---------------------------------------------------------------- criterion 6

fn c6_corruption() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let domain = VoiceDomain::standard();
    let mut snr_gap = 0.0f64;
    for k in 0..100u64 {
        let spk = SyntheticSpeaker::at_register(0, rng.gen(), &domain, k);
        let clue = synth_utterance(&spk, 1.0, k, 8000)?;
        let snr = rng.gen_range(-20.0..=20.0);
        let noisy = corrupt_audio_clue(&clue, snr, rng.gen())?;
        let noise: Vec<f32> = noisy.iter().zip(&clue).map(|(a, b)| a - b).collect();
        snr_gap = snr_gap.max((ratio_db(&clue, &noise) - snr).abs());
    }
    let mut coverage = (1.0f64, 0.0f64);
    let mut schedules_ok = true;
    for k in 0..400 {
        let n = [25, 50, 100, 250][k % 4];
        let s = intermittent_schedule(n, 10.0, &mut rng)?;
        let frac = s.len() as f64 / n as f64;
        coverage = (coverage.0.min(frac), coverage.1.max(frac));
        schedules_ok &= coverage_ok(s.len(), n);
    }
    let cfg = GenConfig { train_pairs: 20, dev_pairs: 4, eval_pairs: 3, adapt_train_pairs: 2, adapt_eval_pairs: 2, ..GenConfig::default() };
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    build_dataset(&cfg, a.path(), 77)?;
    build_dataset(&cfg, b.path(), 77)?;
    let (ha, hb) = (tree_hash(a.path())?, tree_hash(b.path())?);
    Ok(Verdict {
        id: 6,
        title: "corruption exactness",
        passed: snr_gap <= 0.01 && schedules_ok && ha == hb,
        detail: format!(
            "max SNR error {snr_gap:.1e} dB over 100 clues (<= 0.01); 400 schedules cover {:.3}..{:.3} (50% +/- 2%); regenerated tree hash {}",
            coverage.0,
            coverage.1,
            if ha == hb { "identical" } else { "differs" }
        ),
    })
}

// ---------------------------------------------------------------- trend runs

/// Statistics of one seed's trend run.
struct SeedRun {
    seed: u64,
    report: EvalReport,
    na_occluded: f64,
    na_clean: f64,
    att_occluded: f64,
    att_clean: f64,
    unadapted: f64,
    adapted: f64,
    seconds: f64,
}

const SYSTEMS: [(&str, FusionMode, MultitaskMode); 4] = [
    ("proposed", FusionMode::NormAttention, MultitaskMode::Guided),
    ("audio_only", FusionMode::Audio, MultitaskMode::None),
    ("attention", FusionMode::Attention, MultitaskMode::None),
    ("summation", FusionMode::Sum, MultitaskMode::None),
];

/// Frame-pooled mean audio attention over occluded and clean frames.
fn attention_means(model: &ExtractionModel<f32>, items: &[&LoadedItem]) -> Result<(f64, f64)> {
    let (mut occ, mut clean) = ((0.0, 0usize), (0.0, 0usize));
    for it in items {
        for r in attention_trace(model, "", it)?.rows {
            let slot = if r.visual_corruption > 0.0 { &mut occ } else { &mut clean };
            slot.0 += r.attention_audio;
            slot.1 += 1;
        }
    }
    Ok((occ.0 / occ.1.max(1) as f64, clean.0 / clean.1.max(1) as f64))
}

fn trend_run(seed: u64, root: &Path) -> Result<SeedRun> {
    let started = Instant::now();
    let gen = GenConfig::default();
    let data = tempfile::tempdir()?;
    let summary = build_dataset(&gen, data.path(), seed)?;
    let load = |s| load_nonempty(&summary.manifest, s);
    let (train, dev, eval) = (load(Split::Train)?, load(Split::Dev)?, load(Split::Eval)?);
    let (adapt_train, adapt_eval) = (load(Split::AdaptTrain)?, load(Split::AdaptEval)?);
    let out = root.join(format!("seed{seed}"));
    std::fs::create_dir_all(&out)?;

    let train_cfg = TrainConfig { seed, epochs: TREND_EPOCHS, ..TrainConfig::default() };
    let mut systems = Vec::new();
    for (name, fusion, multitask) in SYSTEMS {
        let model = ModelConfig::trend().with_modes(fusion, multitask);
        let job = TrainJob::new(model, train_cfg.clone()).with_output(&out, name);
        let t0 = Instant::now();
        let o = train_model(&job, None, &train, &dev)?;
        println!(
            "  seed {seed} {name:<10} best epoch {:>2} dev {:>6.2} dB ({:.0} s)",
            o.best_epoch,
            o.best_dev_si_sdr,
            t0.elapsed().as_secs_f64()
        );
        systems.push(EvalSystem { name: name.into(), model: o.model, config_hash: o.config_hash, fusion_override: None });
    }

    let meta = EvalMetadata { seed, manifest: summary.manifest.display().to_string(), config_hashes: Default::default() };
    let report = evaluate(&systems, &eval, &eval_column_labels(&gen), meta)?;
    report.write_csv(&out.join("report.csv"))?;
    report.write_json(&out.join("report.json"))?;
    for line in report.render().lines() {
        println!("    {line}");
    }

    let intermittent: Vec<&LoadedItem> = eval.iter().filter(|it| it.entry.condition == "intermittent/clean").collect();
    let (na_occluded, na_clean) = attention_means(&systems[0].model, &intermittent)?;
    let (att_occluded, att_clean) = attention_means(&systems[2].model, &intermittent)?;
    println!(
        "  seed {seed} audio attention occluded/clean: proposed {na_occluded:.3}/{na_clean:.3}, attention {att_occluded:.3}/{att_clean:.3}"
    );

    let proposed = systems[0].model.clone();
    let unadapted = mean_si_sdr(&proposed, &adapt_eval)?;
    let adapted_model = adapt_model(proposed, &train_cfg, train_cfg.adapt_epochs, &adapt_train, Some(RunOutput::new(&out, "adapted")))?.model;
    let adapted = mean_si_sdr(&adapted_model, &adapt_eval)?;
    println!("  seed {seed} adaptation: unadapted {unadapted:.2} dB, adapted {adapted:.2} dB");

    Ok(SeedRun {
        seed,
        report,
        na_occluded,
        na_clean,
        att_occluded,
        att_clean,
        unadapted,
        adapted,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn cell(r: &SeedRun, system: &str, condition: &str) -> f64 {
    r.report.cell(system, condition).unwrap_or(f64::NAN)
}

fn average(r: &SeedRun, system: &str) -> f64 {
    r.report.row(system).and_then(|row| row.average).unwrap_or(f64::NAN)
}

/// Verdict from per-seed outcomes: two of three seeds must hold.
fn majority(id: usize, title: &'static str, runs: &[SeedRun], check: impl Fn(&SeedRun) -> (bool, String)) -> Verdict {
    let mut held = 0;
    let mut parts = Vec::new();
    for r in runs {
        let (ok, detail) = check(r);
        held += ok as usize;
        parts.push(format!("seed {} {} ({detail})", r.seed, if ok { "holds" } else { "fails" }));
    }
    Verdict { id, title, passed: held >= 2, detail: format!("{held}/{} seeds; {}", runs.len(), parts.join("; ")) }
}

fn trend_verdicts(runs: &[SeedRun]) -> Vec<Verdict> {
    let clean = "none/clean";
    let full = "full/clean";
    vec![
        majority(7, "learning works", runs, |r| {
            let gain = cell(r, "proposed", clean) - cell(r, MIXTURE_ROW, clean);
            (gain >= 5.0, format!("gain {gain:.2} dB, need >= 5"))
        }),
        majority(8, "corrupted-clue robustness", runs, |r| {
            let (p, a, c) = (cell(r, "proposed", full), cell(r, "audio_only", full), cell(r, "attention", full));
            let ok = (p - a).abs() <= 1.0 && c <= p - 0.5;
            (ok, format!("visual dead: proposed {p:.2}, audio-only {a:.2} (|diff| <= 1), attention {c:.2} (<= proposed - 0.5)"))
        }),
        majority(9, "averaged advantage", runs, |r| {
            let (p, s, c) = (average(r, "proposed"), average(r, "summation"), average(r, "attention"));
            (p - s >= 0.5 && p - c >= 0.5, format!("grid average proposed {p:.2}, summation {s:.2}, attention {c:.2}"))
        }),
        majority(10, "attention interpretability", runs, |r| {
            let na_spread = r.na_occluded - r.na_clean;
            let att_spread = r.att_occluded - r.att_clean;
            let ok = r.na_occluded >= 0.7
                && (0.35..=0.65).contains(&r.na_clean)
                && na_spread > 0.0
                && 3.0 * att_spread.abs() <= na_spread;
            (
                ok,
                format!(
                    "proposed occluded {:.3} (>= 0.7) clean {:.3} (0.35..0.65), spread {na_spread:.3}; attention spread {att_spread:.4} (<= spread / 3)",
                    r.na_occluded, r.na_clean
                ),
            )
        }),
        majority(11, "adaptation", runs, |r| {
            let gain = r.adapted - r.unadapted;
            (gain >= 1.0, format!("unadapted {:.2}, adapted {:.2}, gain {gain:.2} dB, need >= 1", r.unadapted, r.adapted))
        }),
    ]
}

fn output_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut verdicts = Vec::new();
    let exact: [(usize, &'static str, fn() -> Result<Verdict>); 6] = [
        (1, "gradient checks", c1_gradients),
        (2, "fusion special-case lattice", c2_lattice),
        (3, "normalized-attention scale invariance", c3_scale_invariance),
        (4, "simplex and metric invariants", c4_simplex_and_metric),
        (5, "oracle formulas", c5_oracles),
        (6, "corruption exactness", c6_corruption),
    ];
    for (id, title, check) in exact {
        let v = check().unwrap_or_else(|e| errored(id, title, e));
        println!("{}", v.line());
        verdicts.push(v);
    }

    if std::env::var("TSE_ACCEPTANCE_QUICK").map_or(true, |v| v.is_empty() || v == "0") {
        let trend_start = Instant::now();
        let root = output_root();
        let mut runs = Vec::new();
        let mut failure = None;
        for seed in TREND_SEEDS {
            match trend_run(seed, &root) {
                Ok(r) => {
                    println!("  seed {seed} finished in {:.0} s", r.seconds);
                    runs.push(r);
                }
                Err(e) => failure = Some(e),
            }
            if failure.is_some() {
                break;
            }
        }
        match failure {
            None => verdicts.extend(trend_verdicts(&runs)),
            Some(e) => {
                let msg = format!("{e:#}");
                for (id, title) in [
                    (7, "learning works"),
                    (8, "corrupted-clue robustness"),
                    (9, "averaged advantage"),
                    (10, "attention interpretability"),
                    (11, "adaptation"),
                ] {
                    verdicts.push(errored(id, title, anyhow!("trend run failed: {msg}")));
                }
            }
        }
        let trend_s = trend_start.elapsed().as_secs_f64();
        println!(
            "trend runs: {:.1} min on {} thread(s), target < {:.0} min; artifacts in {}",
            trend_s / 60.0,
            rayon::current_num_threads(),
            WALL_CLOCK_TARGET_S / 60.0,
            root.display()
        );
    } else {
        println!("TSE_ACCEPTANCE_QUICK set: criteria 7-11 not run");
    }

    println!("\nacceptance summary ({:.1} min)", started.elapsed().as_secs_f64() / 60.0);
    for v in &verdicts {
        println!("{}", v.line());
    }
    if verdicts.iter().all(|v| v.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

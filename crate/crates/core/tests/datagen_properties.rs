use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tse_core::datagen::manifest::{read_manifest, tree_hash, validate_manifest, Split};
use tse_core::datagen::signal::{corrupt_audio_clue, interferer_gain, mix, power, ratio_db};
use tse_core::datagen::speaker::{spectral_centroid, speaker_pool, synth_utterance, SyntheticSpeaker, VoiceDomain};
use tse_core::datagen::visual::{corrupt_visual, coverage_ok, intermittent_schedule, speaker_offset, VisualFeaturizer};
use tse_core::datagen::{build_dataset, corruption_plan, GenConfig, TrainCorruption, MAX_MIXTURE_SDR_DB};
use tse_core::objectives::si_sdr;
use tse_core::MaskSpec;

fn speaker(register: f64, seed: u64) -> SyntheticSpeaker {
    SyntheticSpeaker::at_register(0, register, &VoiceDomain::standard(), seed)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn distant_speakers_have_distinct_centroids() {
    let pool = speaker_pool(20, &VoiceDomain::standard(), 4).unwrap();
    let (lo, hi) = (&pool[0], &pool[19]);
    let a = synth_utterance(lo, 1.0, 77, 8000).unwrap();
    let b = synth_utterance(hi, 1.0, 77, 8000).unwrap();
    let gap = (spectral_centroid(&a, 8000) - spectral_centroid(&b, 8000)).abs();
    assert!(gap > 200.0, "centroid gap {gap} Hz");
}

#[test]
fn mixing_power_arithmetic() {
    let t = synth_utterance(&speaker(0.2, 1), 1.0, 1, 8000).unwrap();
    let i = synth_utterance(&speaker(0.8, 2), 1.0, 2, 8000).unwrap();
    let g0 = interferer_gain(&t, &i, 0.0).unwrap();
    let g6 = interferer_gain(&t, &i, 6.0).unwrap();
    assert!((g6 - g0 / 10f64.powf(6.0 / 20.0)).abs() < 1e-12 * g0);
    let scaled: Vec<f32> = i.iter().map(|&x| (x as f64 * g0) as f32).collect();
    assert!(ratio_db(&t, &scaled).abs() < 0.01);
    let m = mix(&t, &i, 0.0).unwrap();
    assert_eq!(m.len(), t.len());
}

#[test]
fn measured_sir_matches_request() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..100u64 {
        let t = synth_utterance(&speaker(0.3, k), 0.5, k, 8000).unwrap();
        let i = synth_utterance(&speaker(0.7, k + 1000), 0.5, k + 1, 8000).unwrap();
        let sir = rand::Rng::gen_range(&mut rng, -5.0..5.0);
        let m = mix(&t, &i, sir).unwrap();
        let interf: Vec<f32> = m.iter().zip(&t).map(|(a, b)| a - b).collect();
        assert!((ratio_db(&t, &interf) - sir).abs() < 0.01, "pair {k}");
    }
}

#[test]
fn visual_features_track_frame_energy() {
    let fz = VisualFeaturizer::new(8000, 25, 32, 5).unwrap();
    let spk = speaker(0.5, 9);
    let x = synth_utterance(&spk, 4.0, 10, 8000).unwrap();
    let offset = speaker_offset(spk.seed, 32);
    let f = fz.features(&x, &offset).unwrap();
    assert_eq!(f.shape(), &[100, 32]);
    let hop = 320;
    let energy: Vec<f64> = (0..100).map(|t| power(&x[t * hop..(t + 1) * hop]).max(1e-12).ln()).collect();
    let magnitude: Vec<f64> = (0..100)
        .map(|t| {
            let row = &f.data()[t * 32..(t + 1) * 32];
            row.iter().zip(&offset).map(|(a, o)| ((a - o) as f64).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    let r = pearson(&magnitude, &energy);
    assert!(r > 0.5, "pearson r = {r}");
}

#[test]
fn visual_frame_count_rounds() {
    let fz = VisualFeaturizer::new(8000, 25, 8, 1).unwrap();
    assert_eq!(fz.frames_for(8000), 25);
    assert_eq!(fz.frames_for(8100), 25);
    assert_eq!(fz.frames_for(8200), 26);
}

#[test]
fn corrupt_visual_endpoints() {
    let fz = VisualFeaturizer::new(8000, 25, 8, 2).unwrap();
    let x = synth_utterance(&speaker(0.4, 3), 1.0, 3, 8000).unwrap();
    let f = fz.features(&x, &speaker_offset(3, 8)).unwrap();
    let (same, p) = corrupt_visual(&f, &MaskSpec::none(), fz.occlusion_token()).unwrap();
    assert_eq!(same, f);
    assert!(p.iter().all(|&v| v == 0));
    let (full, _) = corrupt_visual(&f, &MaskSpec::full(), fz.occlusion_token()).unwrap();
    for t in 0..25 {
        assert_eq!(&full.data()[t * 8..(t + 1) * 8], fz.occlusion_token());
    }
    let schedule = intermittent_schedule(25, 10.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let (part, _) = corrupt_visual(&f, &MaskSpec::intermittent(schedule.clone()), fz.occlusion_token()).unwrap();
    for t in 0..25 {
        let row = &part.data()[t * 8..(t + 1) * 8];
        if schedule.contains(&t) {
            assert_eq!(row, fz.occlusion_token());
        } else {
            assert_eq!(row, &f.data()[t * 8..(t + 1) * 8]);
        }
    }
}

#[test]
fn clue_noise_powers() {
    let clue = synth_utterance(&speaker(0.6, 5), 1.0, 5, 8000).unwrap();
    for (snr, seed) in [(0.0, 1), (-20.0, 2), (7.5, 3)] {
        let noisy = corrupt_audio_clue(&clue, snr, seed).unwrap();
        let noise: Vec<f32> = noisy.iter().zip(&clue).map(|(a, b)| a - b).collect();
        assert!((ratio_db(&clue, &noise) - snr).abs() < 0.01);
        assert_eq!(noisy, corrupt_audio_clue(&clue, snr, seed).unwrap());
    }
}

#[test]
fn histogram_within_two_percent_on_1000_items() {
    let cfg = GenConfig::default();
    let plan = corruption_plan(1000, &cfg, &mut ChaCha8Rng::seed_from_u64(6));
    for kind in [TrainCorruption::VisualFull, TrainCorruption::VisualRect, TrainCorruption::AudioDead, TrainCorruption::AudioRandom] {
        let share = plan.iter().filter(|&&k| k == kind).count() as f64 / 1000.0;
        assert!((share - 0.25).abs() <= 0.02, "{kind:?}: {share}");
    }
}

fn small_config() -> GenConfig {
    GenConfig {
        train_speakers: 4,
        dev_speakers: 2,
        eval_speakers: 2,
        train_pairs: 6,
        dev_pairs: 2,
        eval_pairs: 2,
        adapt_speakers: 4,
        adapt_train_pairs: 2,
        adapt_eval_pairs: 1,
        ..GenConfig::default()
    }
}

#[test]
fn dataset_is_deterministic_and_consistent() {
    let cfg = small_config();
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = build_dataset(&cfg, a.path(), 21).unwrap();
    build_dataset(&cfg, b.path(), 21).unwrap();
    build_dataset(&cfg, c.path(), 22).unwrap();
    assert_eq!(tree_hash(a.path()).unwrap(), tree_hash(b.path()).unwrap());
    assert_ne!(tree_hash(a.path()).unwrap(), tree_hash(c.path()).unwrap());

    let summary = validate_manifest(&sa.manifest).unwrap();
    let entries = read_manifest(&sa.manifest).unwrap();
    assert_eq!(summary.entries, entries.len());
    assert_eq!(entries.len(), 12 + 4 + 16 + 6 + 3);

    let speakers = |split: Split| -> BTreeSet<usize> {
        entries.iter().filter(|e| e.split == split).flat_map(|e| [e.target_speaker, e.interferer_speaker]).collect()
    };
    let (train, dev, eval) = (speakers(Split::Train), speakers(Split::Dev), speakers(Split::Eval));
    assert!(train.is_disjoint(&eval) && train.is_disjoint(&dev) && dev.is_disjoint(&eval));

    let root = sa.manifest.parent().unwrap();
    for e in &entries {
        let item = tse_core::datagen::manifest::load_item(root, e).unwrap();
        assert!(si_sdr(&item.mixture, &item.target).unwrap() < MAX_MIXTURE_SDR_DB, "{}", e.id);
        if let Some(snr) = e.audio_clue_snr_db {
            assert!((-20.0..=20.0).contains(&snr));
        }
        if e.split == Split::Eval && e.condition.starts_with("intermittent") {
            let masked = e.mask.occluded_frames(e.visual_frames).unwrap().iter().filter(|&&m| m).count();
            assert!(coverage_ok(masked, e.visual_frames));
        }
    }

    // a truncated file must be caught
    let victim = root.join(&entries[0].paths.mixture);
    let bytes = std::fs::read(&victim).unwrap();
    std::fs::write(&victim, &bytes[..bytes.len() - 200]).unwrap();
    assert!(validate_manifest(&sa.manifest).is_err());
}

#[test]
fn unreachable_coverage_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(intermittent_schedule(21, 3.0, &mut rng).is_err());
    assert!(intermittent_schedule(22, 3.0, &mut rng).is_ok());
}

proptest! {
    #[test]
    fn schedules_cover_half(n in 25usize..400, seed in any::<u64>(), mean in 2.0f64..15.0) {
        let s = intermittent_schedule(n, mean, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(coverage_ok(s.len(), n));
        prop_assert!((s.len() as f64 / n as f64 - 0.5).abs() <= 0.02 + 1e-12);
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.iter().all(|&t| t < n));
    }

    #[test]
    fn injected_snr_exact(seed in any::<u64>(), snr in -20.0f64..=20.0) {
        let clue = synth_utterance(&speaker(0.5, seed), 0.5, seed, 8000).unwrap();
        let noisy = corrupt_audio_clue(&clue, snr, seed ^ 3).unwrap();
        let noise: Vec<f32> = noisy.iter().zip(&clue).map(|(a, b)| a - b).collect();
        prop_assert!((ratio_db(&clue, &noise) - snr).abs() < 0.01);
    }
}

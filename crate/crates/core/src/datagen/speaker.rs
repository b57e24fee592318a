//! Parametric speakers: formant resonators excited by a glottal pulse train
//! under a syllable-rate amplitude envelope.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Peak amplitude of every synthesized utterance.
pub const UTTERANCE_PEAK: f64 = 0.9;
/// Minimum second-formant spacing between any two speakers of a pool.
pub const MIN_SEPARATION_HZ: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Formant {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpeaker {
    pub id: usize,
    pub formants: Vec<Formant>,
    /// Fundamental frequency range in Hz.
    pub f0_range: (f64, f64),
    pub seed: u64,
}

/// Signature ranges of a speaker population. A register in [0, 1] moves all
/// formants and the pitch from their low to their high end together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoiceDomain {
    /// (low, high) center of each formant.
    pub formant_ranges: Vec<(f64, f64)>,
    pub bandwidths: Vec<f64>,
    pub f0_low: (f64, f64),
}

impl VoiceDomain {
    pub fn standard() -> Self {
        VoiceDomain {
            formant_ranges: vec![(320.0, 760.0), (900.0, 1900.0), (2100.0, 3100.0)],
            bandwidths: vec![80.0, 110.0, 160.0],
            f0_low: (90.0, 230.0),
        }
    }

    /// Shifted population used for domain adaptation.
    pub fn shifted() -> Self {
        VoiceDomain {
            formant_ranges: vec![(250.0, 900.0), (750.0, 2300.0), (1900.0, 3500.0)],
            bandwidths: vec![140.0, 200.0, 260.0],
            f0_low: (70.0, 280.0),
        }
    }
}

impl SyntheticSpeaker {
    /// Speaker at `register` in [0, 1] with small seeded jitter.
    pub fn at_register(id: usize, register: f64, domain: &VoiceDomain, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let formants = domain
            .formant_ranges
            .iter()
            .zip(&domain.bandwidths)
            .enumerate()
            .map(|(k, (&(lo, hi), &bw))| Formant {
                center_hz: lo + (hi - lo) * register,
                bandwidth_hz: bw * rng.gen_range(0.85..1.15),
                gain: 0.6f64.powi(k as i32) * rng.gen_range(0.8..1.2),
            })
            .collect();
        let f0 = domain.f0_low.0 + (domain.f0_low.1 - domain.f0_low.0) * register;
        SyntheticSpeaker { id, formants, f0_range: (f0, f0 * 1.35), seed }
    }

    pub fn second_formant(&self) -> f64 {
        self.formants.get(1).map_or(0.0, |f| f.center_hz)
    }
}

/// `n` speakers on stratified register slots, so signatures spread across the
/// domain and neighbours keep a minimum formant spacing.
pub fn speaker_pool(n: usize, domain: &VoiceDomain, seed: u64) -> Result<Vec<SyntheticSpeaker>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<SyntheticSpeaker> = (0..n)
        .map(|i| {
            let register = (i as f64 + rng.gen_range(0.25..0.75)) / n as f64;
            SyntheticSpeaker::at_register(i, register, domain, rng.gen())
        })
        .collect();
    for w in pool.windows(2) {
        let gap = (w[1].second_formant() - w[0].second_formant()).abs();
        if gap < MIN_SEPARATION_HZ {
            return Err(CoreError::OutOfRange(format!(
                "speakers {} and {} are {gap:.1} Hz apart; pool of {n} is too dense",
                w[0].id, w[1].id
            )));
        }
    }
    Ok(pool)
}

/// Two-pole resonator with unit peak gain near its center.
fn resonate(x: &[f64], f: &Formant, sr: f64) -> Vec<f64> {
    let r = (-PI * f.bandwidth_hz / sr).exp();
    let theta = 2.0 * PI * f.center_hz / sr;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let g = (1.0 - r) * f.gain;
    let (mut y1, mut y2) = (0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = g * v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

/// Deterministic utterance of `duration_s` seconds, peak-normalized to 0.9.
pub fn synth_utterance(speaker: &SyntheticSpeaker, duration_s: f64, seed: u64, sample_rate: u32) -> Result<Vec<f32>> {
    if !(duration_s >= 0.5) {
        return Err(CoreError::OutOfRange(format!("utterance of {duration_s} s; need at least 0.5 s")));
    }
    let sr = sample_rate as f64;
    let n = (duration_s * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ speaker.seed.rotate_left(17));

    // syllable envelope at a per-utterance rate of 2-6 Hz
    let rate = rng.gen_range(2.0..6.0);
    let mut envelope = vec![0.0; n];
    let mut f0_track = vec![0.0; n];
    let mut start = rng.gen_range(0.0..0.5 / rate) * sr;
    while (start as usize) < n {
        let len = rng.gen_range(0.55..0.95) / rate * sr;
        let amp = rng.gen_range(0.45..1.0);
        let (f_a, f_b) = (rng.gen_range(speaker.f0_range.0..speaker.f0_range.1), rng.gen_range(speaker.f0_range.0..speaker.f0_range.1));
        let s0 = start as usize;
        for i in s0..n.min((start + len) as usize) {
            let u = (i as f64 - start) / len;
            envelope[i] = amp * (PI * u).sin().powi(2);
            f0_track[i] = f_a + (f_b - f_a) * u;
        }
        start += len + rng.gen_range(0.05..0.45) / rate * sr;
    }

    // pulse train with aspiration noise
    let mut excitation = vec![0.0; n];
    let mut phase = 0.0;
    let mean_f0 = 0.5 * (speaker.f0_range.0 + speaker.f0_range.1);
    for i in 0..n {
        let f0 = if f0_track[i] > 0.0 { f0_track[i] } else { mean_f0 };
        phase += f0 / sr;
        if phase >= 1.0 {
            phase -= 1.0;
            excitation[i] += 1.0;
        }
        excitation[i] += 0.05 * rng.gen_range(-1.0..1.0);
    }

    let mut voiced = vec![0.0; n];
    for f in &speaker.formants {
        let f = Formant { center_hz: f.center_hz.min(0.45 * sr), ..*f };
        for (v, y) in voiced.iter_mut().zip(resonate(&excitation, &f, sr)) {
            *v += y;
        }
    }
    let out: Vec<f64> = voiced.iter().zip(&envelope).map(|(v, e)| v * e).collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(vec![0.0; n]);
    }
    Ok(out.iter().map(|v| (v * UTTERANCE_PEAK / peak) as f32).collect())
}

/// Power-weighted mean frequency of the whole signal, in Hz.
pub fn spectral_centroid(signal: &[f32], sample_rate: u32) -> f64 {
    let n = signal.len().next_power_of_two().max(2);
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x as f64, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, c) in buf.iter().take(n / 2 + 1).enumerate() {
        let p = c.norm_sqr();
        num += p * k as f64 * sample_rate as f64 / n as f64;
        den += p;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

//! Mixing, audio-clue noise corruption and the adaptation-domain smearing
//! filter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};

/// Peak of every stored mixture after joint rescaling.
pub const MIXTURE_PEAK: f64 = 0.9;

pub fn power(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / x.len() as f64
}

pub fn ratio_db(signal: &[f32], noise: &[f32]) -> f64 {
    10.0 * (power(signal) / power(noise)).log10()
}

/// A mixture with its two scaled components; `mixture = target + interferer`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub mixture: Vec<f32>,
    pub target: Vec<f32>,
    pub interferer: Vec<f32>,
}

/// Interferer gain giving target-to-interferer power ratio `sir_db`.
pub fn interferer_gain(target: &[f32], interferer: &[f32], sir_db: f64) -> Result<f64> {
    let pi = power(interferer);
    if pi == 0.0 {
        return Err(CoreError::Silent("interferer"));
    }
    Ok((power(target) / (pi * 10f64.powf(sir_db / 10.0))).sqrt())
}

/// `target + g * interferer` at the requested SIR (no rescaling).
pub fn mix(target: &[f32], interferer: &[f32], sir_db: f64) -> Result<Vec<f32>> {
    if target.len() != interferer.len() {
        return Err(CoreError::Shape(format!("mix lengths {} vs {}", target.len(), interferer.len())));
    }
    let g = interferer_gain(target, interferer, sir_db)?;
    Ok(target.iter().zip(interferer).map(|(&t, &i)| (t as f64 + g * i as f64) as f32).collect())
}

/// Mix and rescale mixture, target and interferer jointly so the mixture
/// peaks at 0.9; the SIR is unaffected.
pub fn mix_scaled(target: &[f32], interferer: &[f32], sir_db: f64) -> Result<Mixture> {
    if target.len() != interferer.len() {
        return Err(CoreError::Shape(format!("mix lengths {} vs {}", target.len(), interferer.len())));
    }
    let g = interferer_gain(target, interferer, sir_db)?;
    let scaled: Vec<f64> = interferer.iter().map(|&i| g * i as f64).collect();
    let mixed: Vec<f64> = target.iter().zip(&scaled).map(|(&t, &i)| t as f64 + i).collect();
    let peak = mixed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let k = if peak > 0.0 { MIXTURE_PEAK / peak } else { 1.0 };
    Ok(Mixture {
        mixture: mixed.iter().map(|v| (v * k) as f32).collect(),
        target: target.iter().map(|&v| (v as f64 * k) as f32).collect(),
        interferer: scaled.iter().map(|v| (v * k) as f32).collect(),
    })
}

/// Seeded white Gaussian noise added at exactly `snr_db`.
pub fn corrupt_audio_clue(clue: &[f32], snr_db: f64, seed: u64) -> Result<Vec<f32>> {
    if !(-20.0..=20.0).contains(&snr_db) {
        return Err(CoreError::OutOfRange(format!("snr {snr_db} dB outside [-20, 20]")));
    }
    let pc = power(clue);
    if pc == 0.0 {
        return Err(CoreError::Silent("audio clue"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..clue.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let pn = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    let g = (pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(clue.iter().zip(&noise).map(|(&c, &n)| (c as f64 + g * n) as f32).collect())
}

/// Scale so the absolute peak equals `peak` (silent input is returned as is).
pub fn peak_normalize(x: &[f32], peak: f64) -> Vec<f32> {
    let m = x.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs()));
    if m == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|&v| (v as f64 * peak / m) as f32).collect()
}

/// Fixed reverberation-like impulse response: a direct path plus an
/// exponentially decaying noise tail of `tail_ms`.
pub fn smearing_filter(sample_rate: u32, tail_ms: f64, seed: u64) -> Vec<f64> {
    let len = ((tail_ms / 1000.0) * sample_rate as f64).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay = 6.9 / len as f64; // -60 dB at the tail end
    let mut h: Vec<f64> = (0..len).map(|i| 0.6 * (-decay * i as f64).exp() * rng.sample::<f64, _>(StandardNormal)).collect();
    h[0] = 1.0;
    h
}

/// Causal FIR filtering, same length as the input.
pub fn apply_filter(x: &[f32], h: &[f64]) -> Vec<f32> {
    (0..x.len())
        .map(|n| {
            let mut acc = 0.0;
            for (k, &c) in h.iter().enumerate().take(n + 1) {
                acc += c * x[n - k] as f64;
            }
            acc as f32
        })
        .collect()
}

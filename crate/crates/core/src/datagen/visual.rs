//! Synthetic visual clue: a fixed random projection of the target's per-frame
//! log mel envelope plus a per-speaker offset, and feature-space occlusion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use tse_autodiff::Tensor;

use crate::corruption::{MaskSpec, FULL_PERIMETER};
use crate::error::{CoreError, Result};

/// Band energies below this are treated as silence.
pub const ENERGY_FLOOR: f64 = 1e-6;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Dataset-wide feature extractor. The projection and the occlusion token are
/// shared by every speaker so that the visual cluenet can generalize to
/// unseen speakers.
#[derive(Clone, Debug)]
pub struct VisualFeaturizer {
    pub sample_rate: u32,
    pub fps: u32,
    pub dim: usize,
    bands: usize,
    fft_len: usize,
    /// Sparse triangular filters: (bin, weight) per band.
    filters: Vec<Vec<(usize, f64)>>,
    /// `[dim, bands]` row-major.
    projection: Vec<f64>,
    token: Vec<f32>,
}

impl VisualFeaturizer {
    pub fn new(sample_rate: u32, fps: u32, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || fps == 0 || sample_rate < 2 * fps {
            return Err(CoreError::OutOfRange(format!("visual features dim {dim} at {fps} fps / {sample_rate} Hz")));
        }
        let bands = (dim / 2).max(1);
        let hop = (sample_rate / fps) as usize;
        let fft_len = hop.next_power_of_two();
        let (lo, hi) = (hz_to_mel(80.0), hz_to_mel(sample_rate as f64 / 2.0));
        let edges: Vec<f64> = (0..bands + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (bands + 1) as f64)).collect();
        let bin_hz = sample_rate as f64 / fft_len as f64;
        let filters = (0..bands)
            .map(|b| {
                let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
                (0..=fft_len / 2)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > l && f <= c {
                            (f - l) / (c - l)
                        } else if f > c && f < r {
                            (r - f) / (r - c)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 2.0 / (bands as f64).sqrt();
        let projection = (0..dim * bands).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let token = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect();
        Ok(VisualFeaturizer { sample_rate, fps, dim, bands, fft_len, filters, projection, token })
    }

    /// Constant vector that fully occluded frames turn into.
    pub fn occlusion_token(&self) -> &[f32] {
        &self.token
    }

    pub fn frames_for(&self, samples: usize) -> usize {
        (samples as f64 * self.fps as f64 / self.sample_rate as f64).round().max(1.0) as usize
    }

    /// Per-frame log mel envelope relative to the floor, `[T_v][bands]`.
    pub fn log_envelope(&self, target: &[f32]) -> Vec<Vec<f64>> {
        let hop = (self.sample_rate / self.fps) as usize;
        let frames = self.frames_for(target.len());
        let fft = FftPlanner::new().plan_fft_forward(self.fft_len);
        let norm = (1.0 / ENERGY_FLOOR).ln();
        (0..frames)
            .map(|t| {
                let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
                for (i, slot) in buf.iter_mut().enumerate().take(hop) {
                    let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / hop as f64).cos();
                    let x = target.get(t * hop + i).copied().unwrap_or(0.0) as f64;
                    *slot = Complex::new(w * x, 0.0);
                }
                fft.process(&mut buf);
                self.filters
                    .iter()
                    .map(|f| {
                        let e: f64 = f.iter().map(|&(k, w)| w * buf[k].norm_sqr()).sum();
                        (e.max(ENERGY_FLOOR) / ENERGY_FLOOR).ln() / norm
                    })
                    .collect()
            })
            .collect()
    }

    /// Feature matrix `[T_v, D_v]` of a target waveform for a speaker offset.
    pub fn features(&self, target: &[f32], offset: &[f32]) -> Result<Tensor<f32>> {
        if offset.len() != self.dim {
            return Err(CoreError::Shape(format!("speaker offset of {} for dim {}", offset.len(), self.dim)));
        }
        let env = self.log_envelope(target);
        let mut data = Vec::with_capacity(env.len() * self.dim);
        for frame in &env {
            for (d, &o) in offset.iter().enumerate() {
                let row = &self.projection[d * self.bands..(d + 1) * self.bands];
                let v: f64 = row.iter().zip(frame).map(|(p, e)| p * e).sum();
                data.push((v + o as f64) as f32);
            }
        }
        Ok(Tensor::new(vec![env.len(), self.dim], data)?)
    }
}

/// Speaker-identity offset added to every visual frame of that speaker.
pub fn speaker_offset(speaker_seed: u64, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(speaker_seed ^ 0x5eed_0ff5_e7);
    (0..dim).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal) as f32).collect()
}

/// Interpolate masked frames toward the occlusion token with weight
/// `rho = perimeter / 752`. Returns the corrupted features and per-frame
/// perimeters.
pub fn corrupt_visual(features: &Tensor<f32>, mask: &MaskSpec, token: &[f32]) -> Result<(Tensor<f32>, Vec<u32>)> {
    let s = features.shape();
    if s.len() != 2 || s[1] != token.len() {
        return Err(CoreError::Shape(format!("features {s:?} vs token of {}", token.len())));
    }
    let (frames, dim) = (s[0], s[1]);
    let perimeters = mask.perimeters(frames)?;
    let mut out = features.clone();
    for (t, &p) in perimeters.iter().enumerate() {
        if p == 0 {
            continue;
        }
        let rho = p as f32 / FULL_PERIMETER as f32;
        for (x, &k) in out.data_mut()[t * dim..(t + 1) * dim].iter_mut().zip(token) {
            *x = (1.0 - rho) * *x + rho * k;
        }
    }
    Ok((out, perimeters))
}

/// True when `masked / n` lies within 0.5 +/- 0.02 (exact integer test).
pub fn coverage_ok(masked: usize, n: usize) -> bool {
    (100 * masked).abs_diff(50 * n) <= 2 * n
}

/// Masked frame indices made of alternating runs with geometric lengths of
/// mean `mean_run`, resampled until half the frames (+/- 2%) are covered.
pub fn intermittent_schedule<R: Rng + ?Sized>(n_frames: usize, mean_run: f64, rng: &mut R) -> Result<Vec<usize>> {
    if n_frames < 2 || !(mean_run >= 1.0) {
        return Err(CoreError::OutOfRange(format!("intermittent schedule over {n_frames} frames, mean run {mean_run}")));
    }
    if !(0..=n_frames).any(|m| coverage_ok(m, n_frames)) {
        return Err(CoreError::OutOfRange(format!("50% coverage unreachable over {n_frames} frames")));
    }
    let p = 1.0 / mean_run;
    for _ in 0..100_000 {
        let mut masked = Vec::new();
        let mut on = rng.gen_bool(0.5);
        let mut t = 0;
        while t < n_frames {
            let mut len = 1;
            while rng.gen::<f64>() >= p {
                len += 1;
            }
            if on {
                masked.extend(t..(t + len).min(n_frames));
            }
            t += len;
            on = !on;
        }
        if coverage_ok(masked.len(), n_frames) {
            return Ok(masked);
        }
    }
    Err(CoreError::OutOfRange(format!("no schedule with 50% coverage over {n_frames} frames")))
}

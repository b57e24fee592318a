//! WAV (mono PCM 16-bit) and AVF1 visual-feature files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use tse_autodiff::Tensor;

use crate::error::{CoreError, Result};

pub const AVF_MAGIC: &[u8; 4] = b"AVF1";

pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec { channels: 1, sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample(to_pcm16(s))?;
    }
    w.finalize()?;
    Ok(())
}

pub fn to_pcm16(s: f32) -> i16 {
    (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16
}

/// Samples scaled to [-1, 1] and the sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32)> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(CoreError::Format(format!("{}: expected mono 16-bit PCM, got {spec:?}", path.display())));
    }
    let samples = r
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / i16::MAX as f32))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((samples, spec.sample_rate))
}

/// Feature matrix `[T_v, D_v]` as `AVF1`, u32 frames, u32 dim, f32 LE row-major.
pub fn write_avf(path: &Path, features: &Tensor<f32>) -> Result<()> {
    let s = features.shape();
    if s.len() != 2 {
        return Err(CoreError::Shape(format!("visual features must be rank 2, got {s:?}")));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(AVF_MAGIC)?;
    w.write_all(&(s[0] as u32).to_le_bytes())?;
    w.write_all(&(s[1] as u32).to_le_bytes())?;
    for &x in features.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_avf(path: &Path) -> Result<Tensor<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 12];
    r.read_exact(&mut head)?;
    if &head[..4] != AVF_MAGIC {
        return Err(CoreError::Format(format!("{}: bad AVF magic", path.display())));
    }
    let frames = u32::from_le_bytes([head[4], head[5], head[6], head[7]]) as usize;
    let dim = u32::from_le_bytes([head[8], head[9], head[10], head[11]]) as usize;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != frames * dim * 4 {
        return Err(CoreError::Format(format!(
            "{}: expected {} feature bytes, found {}",
            path.display(),
            frames * dim * 4,
            raw.len()
        )));
    }
    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok(Tensor::new(vec![frames, dim], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x: Vec<f32> = (0..100).map(|i| ((i as f32) * 0.1).sin() * 0.8).collect();
        write_wav(&p, &x, 8000).unwrap();
        let (y, sr) = read_wav(&p).unwrap();
        assert_eq!(sr, 8000);
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() <= 1.0 / 32767.0));
    }

    #[test]
    fn avf_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.avf");
        let t = Tensor::new(vec![3, 2], vec![1.0, -2.0, 0.5, 3.25, 0.0, 7.0]).unwrap();
        write_avf(&p, &t).unwrap();
        assert_eq!(read_avf(&p).unwrap(), t);
        std::fs::write(&p, b"AVF1\x02\x00\x00\x00\x02\x00\x00\x00").unwrap();
        assert!(read_avf(&p).is_err());
    }
}

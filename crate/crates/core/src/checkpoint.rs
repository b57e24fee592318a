//! Binary checkpoint: magic `TSF1`, u32 version, u32 length + JSON model
//! config, u32 length + config hash string, u32 parameter count, then per
//! parameter u32 name length, name bytes, u32 rank, u32 dims, and raw
//! little-endian f32 values. All integers are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use tse_autodiff::{ParamStore, Tensor};

use crate::config::ModelConfig;
use crate::error::{CoreError, Result};
use crate::model::ExtractionModel;

pub const MAGIC: &[u8; 4] = b"TSF1";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, model: &ExtractionModel<f32>, config_hash: &str) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = serde_json::to_vec(model.config())?;
    write_bytes(&mut w, &cfg)?;
    write_bytes(&mut w, config_hash.as_bytes())?;
    let params = model.params();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params.iter() {
        write_bytes(&mut w, p.name.as_bytes())?;
        w.write_all(&(p.value.rank() as u32).to_le_bytes())?;
        for &d in p.value.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &x in p.value.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ExtractionModel<f32>, String)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CoreError::Format(format!("unsupported checkpoint version {version}")));
    }
    let config: ModelConfig = serde_json::from_slice(&read_bytes(&mut r)?)?;
    let hash = String::from_utf8(read_bytes(&mut r)?).map_err(|e| CoreError::Format(e.to_string()))?;
    let count = read_u32(&mut r)? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name = String::from_utf8(read_bytes(&mut r)?).map_err(|e| CoreError::Format(e.to_string()))?;
        let rank = read_u32(&mut r)? as usize;
        if rank > 8 {
            return Err(CoreError::Format(format!("parameter {name} has rank {rank}")));
        }
        let shape: Vec<usize> = (0..rank).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<_>>()?;
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        params.add(name, Tensor::new(shape, data)?)?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(CoreError::Format("trailing bytes after checkpoint".into()));
    }
    Ok((ExtractionModel::from_params(config, params)?, hash))
}

pub fn save_checkpoint(path: &Path, model: &ExtractionModel<f32>, config_hash: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    write_checkpoint(BufWriter::new(File::create(path)?), model, config_hash)
}

pub fn load_checkpoint(path: &Path) -> Result<(ExtractionModel<f32>, String)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

fn write_bytes<W: Write>(w: &mut W, b: &[u8]) -> Result<()> {
    w.write_all(&(b.len() as u32).to_le_bytes())?;
    w.write_all(b)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let n = read_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(CoreError::Format(format!("header field of {n} bytes")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let model = ExtractionModel::<f32>::new(ModelConfig::micro(), 3).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model, "abc123").unwrap();
        assert_eq!(&buf[..4], b"TSF1");
        let (back, hash) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(hash, "abc123");
        assert_eq!(back.config(), model.config());
        for (a, b) in model.params().iter().zip(back.params().iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn corrupt_input_rejected() {
        assert!(read_checkpoint(&b"TSF2\x01\x00\x00\x00"[..]).is_err());
        let model = ExtractionModel::<f32>::new(ModelConfig::micro(), 3).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model, "h").unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }
}

//! Single-file binary model checkpoint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic           4 bytes   "FCKP"
//! version         u32       currently 1
//! seed            u64
//! alpha           f64
//! has_q           u8        1 when a conformal quantile is stored
//! q_adjusted      f64       0.0 when has_q = 0
//! adjacency hash  u64       fingerprint of the weighted adjacency
//! meta length     u32
//! meta JSON       ...       model/train config echo (see [`PipelineEcho`])
//! station count   u32
//! per station:    u16 id-length, id bytes, f64 norm-min, f64 norm-max
//! tensor count    u32
//! per tensor:     u16 name-length, name bytes, u8 ndim, u64 × ndim dims,
//!                 f64 × prod(dims) data
//! ```
//!
//! Tensors are written in the fixed parameter order of
//! [`ModelParams::named_tensors`]; loading validates every name and shape
//! against a skeleton rebuilt from the stored config.

use crate::data::NormalizationParams;
use crate::graph::KernelMode;
use crate::neural::{ModelConfig, ModelParams, TrainConfig};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"FCKP";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a checkpoint: {0}")]
    Format(String),
    #[error("config echo is invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

/// Everything needed to rebuild the prediction pipeline at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEcho {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub fractions: [f64; 3],
    pub kernel: KernelMode,
    pub sigma2: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub echo: PipelineEcho,
    pub norm: NormalizationParams,
    pub station_ids: Vec<String>,
    pub adjacency_fingerprint: u64,
    pub alpha: f64,
    pub q_adjusted: Option<f64>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.push(self.q_adjusted.is_some() as u8);
        out.extend_from_slice(&self.q_adjusted.unwrap_or(0.0).to_le_bytes());
        out.extend_from_slice(&self.adjacency_fingerprint.to_le_bytes());

        let meta = serde_json::to_vec(&self.echo)?;
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);

        if self.station_ids.len() != self.norm.min.len() {
            return Err(CheckpointError::Format(format!(
                "{} station ids but {} normalization entries",
                self.station_ids.len(),
                self.norm.min.len()
            )));
        }
        out.extend_from_slice(&(self.station_ids.len() as u32).to_le_bytes());
        for (i, id) in self.station_ids.iter().enumerate() {
            write_str(&mut out, id)?;
            out.extend_from_slice(&self.norm.min[i].to_le_bytes());
            out.extend_from_slice(&self.norm.max[i].to_le_bytes());
        }

        let tensors = self.params.named_tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, dims, data) in tensors {
            write_str(&mut out, &name)?;
            out.push(dims.len() as u8);
            for d in &dims {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Write atomically: to a temp file in the same directory, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp~");
        let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(&bytes).map_err(io)?;
        f.sync_all().ok();
        drop(f);
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Format(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let seed = r.u64()?;
        let alpha = r.f64()?;
        let has_q = r.u8()? != 0;
        let q_raw = r.f64()?;
        let q_adjusted = has_q.then_some(q_raw);
        let adjacency_fingerprint = r.u64()?;

        let meta_len = r.u32()? as usize;
        let echo: PipelineEcho = serde_json::from_slice(r.take(meta_len)?)?;

        let n_stations = r.u32()? as usize;
        let mut station_ids = Vec::with_capacity(n_stations);
        let mut min = Vec::with_capacity(n_stations);
        let mut max = Vec::with_capacity(n_stations);
        for _ in 0..n_stations {
            station_ids.push(r.string()?);
            min.push(r.f64()?);
            max.push(r.f64()?);
        }
        let norm = NormalizationParams { min, max };

        // Rebuild the parameter skeleton, then fill it tensor by tensor.
        let mut params = ModelParams::init(&echo.model, seed)
            .map_err(|e| CheckpointError::Format(format!("stored config is invalid: {e}")))?;
        let expected: Vec<(String, Vec<usize>)> = params
            .named_tensors()
            .into_iter()
            .map(|(n, d, _)| (n, d))
            .collect();
        let n_tensors = r.u32()? as usize;
        if n_tensors != expected.len() {
            return Err(CheckpointError::Format(format!(
                "checkpoint has {n_tensors} tensors, config implies {}",
                expected.len()
            )));
        }
        let mut loaded: Vec<Vec<f64>> = Vec::with_capacity(n_tensors);
        for (name, dims) in &expected {
            let stored_name = r.string()?;
            if &stored_name != name {
                return Err(CheckpointError::Format(format!(
                    "tensor order mismatch: found {stored_name:?}, expected {name:?}"
                )));
            }
            let ndim = r.u8()? as usize;
            let mut stored_dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                stored_dims.push(r.u64()? as usize);
            }
            if &stored_dims != dims {
                return Err(CheckpointError::Format(format!(
                    "tensor {name:?} has shape {stored_dims:?}, expected {dims:?}"
                )));
            }
            let len: usize = stored_dims.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(r.f64()?);
            }
            loaded.push(data);
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Format(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            )));
        }
        for (slot, data) in params.tensors_mut().into_iter().zip(loaded) {
            slot.copy_from_slice(&data);
        }

        Ok(Checkpoint {
            params,
            echo,
            norm,
            station_ids,
            adjacency_fingerprint,
            alpha,
            q_adjusted,
            seed,
        })
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(CheckpointError::Format(format!("string too long ({} bytes)", bytes.len())));
    }
    out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(bytes);
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Format("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| CheckpointError::Format("non-UTF8 string".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Activation;

    fn sample_checkpoint() -> Checkpoint {
        let model = ModelConfig {
            stations: 3,
            look_back: 8,
            horizon: 2,
            gcn_dims: vec![4],
            gcn_activation: Activation::Relu,
            lstm_hidden: vec![5],
        };
        let mut params = ModelParams::init(&model, 9).unwrap();
        // Perturb so the payload differs from the seeded skeleton.
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v += 0.125;
            }
        }
        Checkpoint {
            params,
            echo: PipelineEcho {
                model,
                train: TrainConfig::default(),
                fractions: [0.7, 0.15, 0.15],
                kernel: KernelMode::Gaussian,
                sigma2: 0.1,
                epsilon: 1e-6,
            },
            norm: NormalizationParams { min: vec![0.0, 1.0, 2.0], max: vec![10.0, 11.0, 2.0] },
            station_ids: vec!["S0".into(), "S1".into(), "S2".into()],
            adjacency_fingerprint: 0xDEADBEEF,
            alpha: 0.1,
            q_adjusted: Some(0.515),
            seed: 9,
        }
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ck = sample_checkpoint();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.params, ck.params);
        assert_eq!(back.echo, ck.echo);
        assert_eq!(back.norm, ck.norm);
        assert_eq!(back.station_ids, ck.station_ids);
        assert_eq!(back.adjacency_fingerprint, ck.adjacency_fingerprint);
        assert_eq!(back.q_adjusted, ck.q_adjusted);
        assert_eq!(back.alpha, ck.alpha);
    }

    #[test]
    fn save_and_load_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let ck = sample_checkpoint();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.params, ck.params);
        // No temp file left behind.
        assert!(!path.with_extension("tmp~").exists());
    }

    #[test]
    fn rejects_corruption() {
        let ck = sample_checkpoint();
        let mut bytes = ck.to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::Format(_))));

        let mut truncated = ck.to_bytes().unwrap();
        truncated.truncate(truncated.len() - 3);
        assert!(Checkpoint::from_bytes(&truncated).is_err());

        let mut extended = ck.to_bytes().unwrap();
        extended.push(0);
        assert!(Checkpoint::from_bytes(&extended).is_err());
    }
}

//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic    "BDECKPT\0"
//! version  u32
//! digest   [u8; 32]   config digest
//! epoch    u64
//! step     u64        ADAM step
//! stream   u64 seed, u64 stream id, u128 word position
//! layers   u32, then (u64 fan_in, u64 fan_out) per layer
//! values   f64 arrays: params, ADAM m, ADAM v; each layer weights then bias
//! check    [u8; 32]   SHA-256 of everything above
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{AdamState, Dense, NetworkParams};
use crate::error::{Error, Result};
use crate::math::{Mat, StreamState};

const MAGIC: &[u8; 8] = b"BDECKPT\0";
const VERSION: u32 = 1;

/// Everything needed to continue training bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub adam: AdamState,
    /// Number of completed epochs.
    pub epoch_index: usize,
    /// Position of the batch-order stream.
    pub data_order: StreamState,
    pub config_digest: [u8; 32],
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_digest);
        out.extend_from_slice(&(self.epoch_index as u64).to_le_bytes());
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        out.extend_from_slice(&self.data_order.seed.to_le_bytes());
        out.extend_from_slice(&self.data_order.stream_id.to_le_bytes());
        out.extend_from_slice(&self.data_order.word_pos.to_le_bytes());
        out.extend_from_slice(&(self.params.layers.len() as u32).to_le_bytes());
        for l in &self.params.layers {
            out.extend_from_slice(&(l.weights.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(l.weights.cols() as u64).to_le_bytes());
        }
        for p in [&self.params, &self.adam.m, &self.adam.v] {
            for v in p.tensors().flatten() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let check = Sha256::digest(&out);
        out.extend_from_slice(&check);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err("not a checkpoint file".into());
        }
        let (body, check) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != check {
            return Err("checksum mismatch".into());
        }
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = u32::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let config_digest: [u8; 32] = r.array()?;
        let epoch_index = u64::from_le_bytes(r.array()?) as usize;
        let step = u64::from_le_bytes(r.array()?);
        let data_order = StreamState {
            seed: u64::from_le_bytes(r.array()?),
            stream_id: u64::from_le_bytes(r.array()?),
            word_pos: u128::from_le_bytes(r.array()?),
        };
        let n_layers = u32::from_le_bytes(r.array()?) as usize;
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = u64::from_le_bytes(r.array()?) as usize;
            let cols = u64::from_le_bytes(r.array()?) as usize;
            shapes.push((rows, cols));
        }
        let read_params = |r: &mut Reader| -> std::result::Result<NetworkParams, String> {
            let mut layers = Vec::with_capacity(n_layers);
            for &(rows, cols) in &shapes {
                let w = r.f64s(rows.checked_mul(cols).ok_or("layer too large")?)?;
                let bias = r.f64s(cols)?;
                layers.push(Dense {
                    weights: Mat::from_vec(rows, cols, w).map_err(|e| e.to_string())?,
                    bias,
                });
            }
            Ok(NetworkParams { layers })
        };
        let params = read_params(&mut r)?;
        let m = read_params(&mut r)?;
        let v = read_params(&mut r)?;
        if r.pos != body.len() {
            return Err(format!("{} trailing bytes", body.len() - r.pos));
        }
        Ok(Checkpoint {
            params,
            adam: AdamState { m, v, step },
            epoch_index,
            data_order,
            config_digest,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|detail| Error::Format {
            path: path.to_path_buf(),
            detail,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length matches"))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("array too large")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;
    use crate::network::{train, MlpConfig};
    use crate::Dataset;

    fn sample_checkpoint() -> Checkpoint {
        let cfg = MlpConfig {
            hidden_sizes: vec![4, 3],
            epochs: 3,
            ..MlpConfig::new(2)
        };
        let x = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.5], [2.0, -1.0], [-1.0, 0.0]]).unwrap();
        let d = Dataset::new(x, vec![0.1, 0.4, -0.3, 1.0]).unwrap();
        train(&cfg, &d, &RngStream::new(3, 0), Some(2)).unwrap().1.unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = sample_checkpoint().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(Checkpoint::from_bytes(&bytes).unwrap_err().contains("checksum"));
        assert!(Checkpoint::from_bytes(b"hello").is_err());
        let good = sample_checkpoint().to_bytes();
        assert!(Checkpoint::from_bytes(&good[..good.len() - 40]).is_err());
    }
}

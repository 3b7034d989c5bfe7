//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `QFCK`, `u32` format version, 32-byte config
//! hash, `f64` progress, `u64` header length and a JSON header, `u32` tensor
//! count followed by each tensor (`u32` name length, name, `u32` rank, `u64`
//! dims, `f32` data), a `u8` flag and the Adam first and second moments in the
//! same order when present, and finally the SHA-256 of everything before it.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nn::{ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"QFCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint integrity check failed")]
    Integrity,
    #[error("checkpoint truncated or malformed: {0}")]
    Malformed(String),
    #[error("checkpoint was written for config {found}, expected {expected}")]
    ConfigMismatch { found: String, expected: String },
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
}

/// Decoded checkpoint. `H` is the JSON header type.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<H> {
    pub config_hash: [u8; 32],
    pub progress: f64,
    pub header: H,
    pub params: ParamStore,
    pub moments: Option<(Vec<Vec<f32>>, Vec<Vec<f32>>)>,
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(buf: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

impl<H: Serialize> Checkpoint<H> {
    pub fn encode(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, FORMAT_VERSION);
        buf.extend_from_slice(&self.config_hash);
        buf.extend_from_slice(&self.progress.to_le_bytes());
        let header = serde_json::to_vec(&self.header)?;
        put_u64(&mut buf, header.len() as u64);
        buf.extend_from_slice(&header);
        put_u32(&mut buf, self.params.len() as u32);
        for (name, t) in self.params.iter() {
            put_u32(&mut buf, name.len() as u32);
            buf.extend_from_slice(name.as_bytes());
            put_u32(&mut buf, t.shape().len() as u32);
            for &d in t.shape() {
                put_u64(&mut buf, d as u64);
            }
            put_f32s(&mut buf, t.data());
        }
        match &self.moments {
            Some((m, v)) => {
                buf.push(1);
                for x in m.iter().chain(v) {
                    put_f32s(&mut buf, x);
                }
            }
            None => buf.push(0),
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    /// Writes to a temporary file next to `path` and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let bytes = self.encode()?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| CheckpointError::Io(e.error))?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CheckpointError::Malformed(format!("need {n} bytes at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| CheckpointError::Malformed("length overflow".into()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CheckpointError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| CheckpointError::Malformed("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

impl<H: for<'de> Deserialize<'de>> Checkpoint<H> {
    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < 8 + 32 {
            return Err(CheckpointError::Malformed("file too short".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(CheckpointError::Integrity);
        }
        let mut r = Reader { bytes: body, pos: 8 };
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let progress = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let hlen = r.len()?;
        let header: H = serde_json::from_slice(r.take(hlen)?)?;
        let count = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| CheckpointError::Malformed("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>, _>>()?;
            let numel = dims.iter().product();
            let data = r.f32s(numel)?;
            let t = Tensor::new(dims, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            params
                .insert(name, t)
                .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        }
        let moments = match r.take(1)?[0] {
            0 => None,
            1 => {
                let sizes: Vec<usize> = (0..params.len()).map(|i| params.at(i).numel()).collect();
                let mut read = || sizes.iter().map(|&n| r.f32s(n)).collect::<Result<Vec<_>, _>>();
                let m = read()?;
                let v = read()?;
                Some((m, v))
            }
            f => return Err(CheckpointError::Malformed(format!("bad optimizer flag {f}"))),
        };
        if r.pos != body.len() {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }
        Ok(Self {
            config_hash,
            progress,
            header,
            params,
            moments,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::decode(&fs::read(path)?)
    }
}

/// Parses a 64-character hex digest.
pub fn hash_bytes(hex: &str) -> [u8; 32] {
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = hex
            .get(2 * i..2 * i + 2)
            .and_then(|s| u8::from_str_radix(s, 16).ok())
            .unwrap_or(0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint<serde_json::Value> {
        let mut params = ParamStore::new();
        params.insert("a.weight", Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-30, -7.25]).unwrap()).unwrap();
        params.insert("a.bias", Tensor::vector(vec![0.5, f32::MIN_POSITIVE])).unwrap();
        Checkpoint {
            config_hash: [7; 32],
            progress: 0.375,
            header: serde_json::json!({"iteration": 3}),
            moments: Some((vec![vec![0.1; 6], vec![0.2; 2]], vec![vec![0.3; 6], vec![0.4; 2]])),
            params,
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let back = Checkpoint::<serde_json::Value>::decode(&c.encode().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn detects_corruption() {
        let mut bytes = sample().encode().unwrap();
        let k = bytes.len() / 2;
        bytes[k] ^= 0x01;
        assert!(matches!(
            Checkpoint::<serde_json::Value>::decode(&bytes),
            Err(CheckpointError::Integrity)
        ));
    }

    #[test]
    fn rejects_other_versions_and_magic() {
        let mut bytes = sample().encode().unwrap();
        bytes[4] = 9;
        assert!(matches!(
            Checkpoint::<serde_json::Value>::decode(&bytes),
            Err(CheckpointError::Version { found: 9, .. })
        ));
        assert!(matches!(
            Checkpoint::<serde_json::Value>::decode(b"nope"),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn hex_parsing() {
        let h = crate::config::hex(&[0xab; 32]);
        assert_eq!(hash_bytes(&h), [0xab; 32]);
    }
}

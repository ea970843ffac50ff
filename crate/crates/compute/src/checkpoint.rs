//! Binary checkpoint format.
//!
//! ```text
//! "CDDS" | version u32 | config_len u32 | config UTF-8 | n_params u32 |
//!   per parameter: name_len u32 | name | rank u32 | extents u32 × rank |
//!                  values f32 × prod(extents)
//! ```
//! All integers and floats are little-endian; values are row-major.

use std::path::Path;

use crate::error::{ComputeError, Result};
use crate::params::ParameterStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CDDS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config: String,
    pub params: Vec<(String, Tensor<f32>)>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| ComputeError::Malformed(format!("{v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

impl Checkpoint {
    pub fn from_store(config: &str, store: &ParameterStore<f32>) -> Self {
        Checkpoint {
            version: VERSION,
            config: config.to_string(),
            params: store.iter().map(|(n, t, _)| (n.to_string(), t.clone())).collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        put_u32(&mut out, self.config.len())?;
        out.extend_from_slice(self.config.as_bytes());
        put_u32(&mut out, self.params.len())?;
        for (name, t) in &self.params {
            put_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.shape().len())?;
            for &e in t.shape() {
                put_u32(&mut out, e)?;
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ComputeError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(ComputeError::UnsupportedVersion(version));
        }
        let config = r.string()?;
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .ok_or_else(|| ComputeError::Malformed(format!("{name}: extent overflow")))?;
            let raw = r.take(count.checked_mul(4).ok_or(ComputeError::TruncatedCheckpoint)?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            params.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(ComputeError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { version, config, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Copies every stored tensor into `store`, which must already hold the
    /// same names with the same shapes (trainable flags are kept).
    pub fn apply_to(&self, store: &mut ParameterStore<f32>) -> Result<()> {
        for (name, t) in &self.params {
            let cur = store.get(name).ok_or_else(|| ComputeError::UnexpectedParameter(name.clone()))?;
            if cur.shape() != t.shape() {
                return Err(ComputeError::ParameterShape {
                    name: name.clone(),
                    expected: cur.shape().to_vec(),
                    found: t.shape().to_vec(),
                });
            }
        }
        if let Some(missing) = store.names().find(|n| !self.params.iter().any(|(p, _)| p == n)) {
            return Err(ComputeError::MissingParameter(missing.to_string()));
        }
        for (name, t) in &self.params {
            let trainable = store.is_trainable(name);
            store.insert(name.clone(), t.clone(), trainable);
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(ComputeError::TruncatedCheckpoint)?;
        let s = self.bytes.get(self.pos..end).ok_or(ComputeError::TruncatedCheckpoint)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| ComputeError::Malformed(e.to_string()))
    }
}

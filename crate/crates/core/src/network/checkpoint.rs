//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic       8 bytes   "PINN2DT1"
//! activation  u8        0 = tanh, 1 = sigmoid
//! seed        u64
//! n_sizes     u32
//! sizes       n_sizes x u32   layer widths, input first
//! n_params    u64
//! params      n_params x f64  per layer: row-major weights, then bias
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a save/load round trip is exact.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{Activation, Mlp, NetworkError};

const MAGIC: &[u8; 8] = b"PINN2DT1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on checkpoint: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint truncated")]
    Truncated,
    #[error("unknown activation tag {0}")]
    UnknownActivation(u8),
    #[error("{0} trailing bytes after checkpoint data")]
    TrailingBytes(usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Mlp {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 1 + 8 + 4 + 4 * self.sizes.len() + 8 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.push(self.activation.tag());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for &s in &self.sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for &p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let tag = r.u8()?;
        let activation = Activation::from_tag(tag).ok_or(CheckpointError::UnknownActivation(tag))?;
        let seed = r.u64()?;
        let n_sizes = r.u32()? as usize;
        let sizes = (0..n_sizes)
            .map(|_| r.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n_params = r.u64()? as usize;
        if r.bytes.len() < n_params.saturating_mul(8) {
            return Err(CheckpointError::Truncated);
        }
        let params = (0..n_params)
            .map(|_| r.u64().map(f64::from_bits))
            .collect::<Result<Vec<_>, _>>()?;
        if !r.bytes.is_empty() {
            return Err(CheckpointError::TrailingBytes(r.bytes.len()));
        }
        Ok(Mlp::from_parts(sizes, activation, params, seed)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

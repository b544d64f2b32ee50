//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "BOEDCKPT" | version u32 | meta_len u32 | meta JSON (UTF-8)
//! | tensor_count u32
//! | per tensor: name_len u16 | name | rank u8 | dims u32 × rank | f64 × prod(dims)
//! | crc32 of every preceding byte
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::array::Array;

pub const MAGIC: &[u8; 8] = b"BOEDCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint digest mismatch: stored {stored:08x}, computed {computed:08x}")]
    DigestMismatch { stored: u32, computed: u32 },
    #[error("unsupported checkpoint version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("tensor {0} contains non-finite values")]
    NonFinite(String),
    #[error("invalid metadata: {0}")]
    Metadata(String),
}

/// Header metadata. Free-form keys (policy kind, summary dimension, ...) go in `extra`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: String,
    pub config_digest: String,
    pub seed: u64,
    pub iteration: u64,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl CheckpointMeta {
    pub fn new(model: impl Into<String>, config_digest: impl Into<String>, seed: u64, iteration: u64) -> Self {
        Self {
            model: model.into(),
            config_digest: config_digest.into(),
            seed,
            iteration,
            extra: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.extra.insert(key.to_string(), value.into());
        self
    }

    pub fn extra_str(&self, key: &str) -> Option<&str> {
        self.extra.get(key).and_then(|v| v.as_str())
    }
}

pub fn encode_checkpoint(tensors: &[(String, Array)], meta: &CheckpointMeta) -> Result<Vec<u8>, CheckpointError> {
    let meta_json = serde_json::to_vec(meta).map_err(|e| CheckpointError::Metadata(e.to_string()))?;
    let mut out = Vec::with_capacity(64 + tensors.iter().map(|(n, a)| n.len() + 8 * a.len() + 16).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, array) in tensors {
        if !array.all_finite() {
            return Err(CheckpointError::NonFinite(name.clone()));
        }
        let name_len = u16::try_from(name.len())
            .map_err(|_| CheckpointError::Metadata(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(array.rank() as u8);
        for &d in array.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in array.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Corrupt(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Vec<(String, Array)>, CheckpointMeta), CheckpointError> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    if bytes.len() < 12 + 4 + 4 + 4 {
        return Err(CheckpointError::Corrupt("truncated file".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());

    // Parse structurally first so a truncated file reports as corrupt rather
    // than as a digest failure.
    let mut r = Reader { buf: body, pos: 12 };
    let meta_len = r.u32("metadata length")? as usize;
    let meta_bytes = r.take(meta_len, "metadata")?;
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for i in 0..count {
        let name_len = u16::from_le_bytes(r.take(2, "tensor name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| CheckpointError::Corrupt(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let rank = r.take(1, "tensor rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dims")? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = r.take(n.checked_mul(8).ok_or_else(|| CheckpointError::Corrupt("tensor too large".into()))?, "tensor payload")?;
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, Array::from_shape(&shape, values)));
    }
    if r.pos != body.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes before digest",
            body.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(body);
    if computed != stored {
        return Err(CheckpointError::DigestMismatch { stored, computed });
    }
    let meta: CheckpointMeta =
        serde_json::from_slice(meta_bytes).map_err(|e| CheckpointError::Corrupt(format!("metadata: {e}")))?;
    Ok((tensors, meta))
}

pub fn save_checkpoint(path: &Path, tensors: &[(String, Array)], meta: &CheckpointMeta) -> Result<(), CheckpointError> {
    let bytes = encode_checkpoint(tensors, meta)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Vec<(String, Array)>, CheckpointMeta), CheckpointError> {
    let bytes = std::fs::read(path)?;
    decode_checkpoint(&bytes)
}

/// Reads only the metadata block; the digest is still verified.
pub fn read_checkpoint_meta(path: &Path) -> Result<CheckpointMeta, CheckpointError> {
    load_checkpoint(path).map(|(_, meta)| meta)
}

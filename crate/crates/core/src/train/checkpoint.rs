//! Versioned binary checkpoints.
//!
//! ```text
//! magic "QRNT" | version u8 | file length u64
//! meta length u32 | meta JSON
//! tensor count u32 | (name length u16, name, value count u64)*
//! values f64*  (all integers and floats little-endian)
//! CRC-32 of everything above, u32
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, TrainConfig};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u8 = 1;
const MAGIC: &[u8; 4] = b"QRNT";
const LENGTH_OFFSET: usize = 5;
const HEADER_LEN: usize = 13;

/// Configuration echo stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
}

pub fn encode_checkpoint(model: &Model) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&CheckpointMeta {
        model: model.config.clone(),
        train: model.trained_with,
    })?;
    let tensors = model.weights.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&0u64.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, values) in &tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    }
    for (_, values) in &tensors {
        for v in *values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let total = (out.len() + 4) as u64;
    out[LENGTH_OFFSET..HEADER_LEN].copy_from_slice(&total.to_le_bytes());
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            offset: 0,
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not a checkpoint file".into(),
        });
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: bytes[4],
            expected: FORMAT_VERSION,
        });
    }
    let stated = u64::from_le_bytes(bytes[LENGTH_OFFSET..HEADER_LEN].try_into().expect("8 bytes"));
    if stated != bytes.len() as u64 {
        return Err(Error::Truncated {
            offset: LENGTH_OFFSET,
            needed: usize::try_from(stated).unwrap_or(usize::MAX),
            available: bytes.len(),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader {
        bytes: body,
        pos: HEADER_LEN,
    };
    let meta_len = r.u32()? as usize;
    let meta_offset = r.pos;
    let meta: CheckpointMeta =
        serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Format {
            offset: meta_offset,
            message: format!("bad config echo: {e}"),
        })?;
    let n_tensors = r.u32()? as usize;
    let mut index = Vec::with_capacity(n_tensors.min(1024));
    for _ in 0..n_tensors {
        let name_len = r.u16()? as usize;
        let name_offset = r.pos;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| Error::Format {
            offset: name_offset,
            message: "tensor name is not UTF-8".into(),
        })?;
        index.push((name.to_owned(), r.u64()?));
    }

    let mut model = Model::init(meta.model)?;
    model.trained_with = meta.train;
    let expected: Vec<(String, usize)> = model
        .weights
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.len()))
        .collect();
    let index_offset = r.pos;
    let matches = index.len() == expected.len()
        && index
            .iter()
            .zip(&expected)
            .all(|((n, c), (en, ec))| n == en && *c == *ec as u64);
    if !matches {
        return Err(Error::Format {
            offset: index_offset,
            message: "tensor index does not match the configured architecture".into(),
        });
    }
    for t in model.weights.tensors_mut() {
        for v in t.iter_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
    }
    if r.pos != body.len() {
        return Err(Error::Format {
            offset: r.pos,
            message: "trailing bytes after the weights".into(),
        });
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    decode_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

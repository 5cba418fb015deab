//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "SYLSTMCK"
//! version      u32
//! header_len   u64
//! header       header_len bytes of JSON: format, version, model config,
//!              metadata (task, class names, vocabulary hash, free-form
//!              extra), embedding_trainable, and the ordered tensor list
//!              [{name, shape}]
//! data         f64 values of every listed tensor in order, row-major
//! checksum     32-byte SHA-256 of everything above
//! ```
//!
//! The tensor list holds the trainable tensors followed by the four
//! batch-norm running statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, SyLstmParams};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SYLSTMCK";
pub const VERSION: u32 = 1;
const FORMAT: &str = "sylstm-checkpoint";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub task: Option<String>,
    pub classes: Vec<String>,
    /// [`crate::Vocabulary::hash`] of the vocabulary the ids refer to.
    pub vocab_hash: String,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    meta: CheckpointMeta,
    embedding_trainable: bool,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: SyLstmParams,
    pub meta: CheckpointMeta,
}

pub fn to_bytes(
    config: &ModelConfig,
    params: &SyLstmParams,
    meta: &CheckpointMeta,
) -> Result<Vec<u8>> {
    let all: Vec<_> = params
        .tensors()
        .into_iter()
        .chain(params.buffers())
        .collect();
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        config: config.clone(),
        meta: meta.clone(),
        embedding_trainable: params.embedding.trainable,
        tensors: all
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let n_values: usize = all.iter().map(|t| t.data.len()).sum();
    let mut out = Vec::with_capacity(20 + json.len() + 8 * n_values + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &all {
        for v in t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(digest.as_slice());
    Ok(out)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 20 + 32 {
        return Err(bad("file too short"));
    }
    let (body, stored) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != stored {
        return Err(bad("checksum mismatch"));
    }
    if &body[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&body[20..header_end])?;
    if header.format != FORMAT {
        return Err(bad(format!("unknown format {:?}", header.format)));
    }
    header.config.validate()?;
    let vocab_rows = header
        .tensors
        .first()
        .filter(|t| t.name == "embedding" && t.shape.len() == 2)
        .map(|t| t.shape[0])
        .ok_or_else(|| bad("first tensor must be the embedding"))?;
    let mut params = SyLstmParams::zeros(&header.config, vocab_rows);
    params.embedding.trainable = header.embedding_trainable;
    let mut data = &body[header_end..];
    let mut targets = params.tensors_mut();
    let n_trainable = targets.len();
    if header.tensors.len() != n_trainable + 4 {
        return Err(bad(format!(
            "expected {} tensors, header lists {}",
            n_trainable + 4,
            header.tensors.len()
        )));
    }
    for (entry, slot) in header.tensors.iter().zip(targets.iter_mut()) {
        read_tensor(entry, &slot.name, &slot.shape, slot.data, &mut data)?;
    }
    drop(targets);
    for (entry, slot) in header.tensors[n_trainable..]
        .iter()
        .zip(params.buffers_mut())
    {
        read_tensor(entry, &slot.name, &slot.shape, slot.data, &mut data)?;
    }
    if !data.is_empty() {
        return Err(bad(format!(
            "{} trailing bytes after tensor data",
            data.len()
        )));
    }
    Ok(Checkpoint {
        config: header.config,
        params,
        meta: header.meta,
    })
}

fn read_tensor(
    entry: &TensorEntry,
    name: &str,
    shape: &[usize],
    dst: &mut [f64],
    data: &mut &[u8],
) -> Result<()> {
    if entry.name != name || entry.shape != shape {
        return Err(bad(format!(
            "tensor {} {:?} does not match expected {} {:?}",
            entry.name, entry.shape, name, shape
        )));
    }
    let n = dst.len() * 8;
    if data.len() < n {
        return Err(bad(format!("tensor {name} is truncated")));
    }
    let (chunk, rest) = data.split_at(n);
    for (d, b) in dst.iter_mut().zip(chunk.chunks_exact(8)) {
        *d = f64::from_le_bytes(b.try_into().expect("8 bytes"));
    }
    *data = rest;
    Ok(())
}

pub fn save(
    path: &Path,
    config: &ModelConfig,
    params: &SyLstmParams,
    meta: &CheckpointMeta,
) -> Result<()> {
    let bytes = to_bytes(config, params, meta)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

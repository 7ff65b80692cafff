use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use swinseg_tensor::{NamedParameterSet, Tensor};
use thiserror::Error;

/// File layout: the 8-byte magic, one line of JSON header, then a raw
/// little-endian `f32` blob. Header offsets are byte positions within the
/// blob. Values quantized to `f32` round-trip bit-exactly.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SWSEGCKP";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic: expected {:?}", CHECKPOINT_MAGIC)]
    BadMagic,

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("tensor {name:?}: {detail}")]
    ShapeMismatch { name: String, detail: String },

    #[error("truncated blob: expected {expected} bytes, got {got}")]
    TruncatedBlob { expected: usize, got: usize },

    #[error("unsupported dtype {0:?}")]
    UnknownDtype(String),

    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
}

const VERSION: u32 = 1;

/// Serializes the parameter set to the checkpoint byte layout.
pub fn checkpoint_bytes(params: &NamedParameterSet) -> Vec<u8> {
    let mut entries = Vec::with_capacity(params.len());
    let mut offset = 0u64;
    for (name, t) in params.iter() {
        entries.push(TensorEntry {
            name: name.to_string(),
            dtype: "f32".to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += 4 * t.numel() as u64;
    }
    let header = serde_json::to_string(&Header { version: VERSION, tensors: entries })
        .expect("header serializes");
    let mut out = Vec::with_capacity(8 + header.len() + 1 + offset as usize);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(header.as_bytes());
    out.push(b'\n');
    for (_, t) in params.iter() {
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(params: &NamedParameterSet, path: &Path) -> Result<(), CheckpointError> {
    let bytes = checkpoint_bytes(params);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Parses checkpoint bytes back into a parameter set (`f32` widened to the
/// in-memory `f64`).
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<NamedParameterSet, CheckpointError> {
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let rest = &bytes[8..];
    let newline = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CheckpointError::MalformedHeader("missing newline terminator".to_string()))?;
    let header: Header = serde_json::from_slice(&rest[..newline])
        .map_err(|e| CheckpointError::MalformedHeader(e.to_string()))?;
    if header.version != VERSION {
        return Err(CheckpointError::MalformedHeader(format!("unsupported version {}", header.version)));
    }
    let blob = &rest[newline + 1..];
    let mut params = NamedParameterSet::new();
    let mut expected_offset = 0u64;
    for entry in &header.tensors {
        if entry.dtype != "f32" {
            return Err(CheckpointError::UnknownDtype(entry.dtype.clone()));
        }
        if entry.offset != expected_offset {
            return Err(CheckpointError::ShapeMismatch {
                name: entry.name.clone(),
                detail: format!("offset {} does not follow previous tensor ({})", entry.offset, expected_offset),
            });
        }
        let numel: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + 4 * numel;
        if end > blob.len() {
            return Err(CheckpointError::TruncatedBlob { expected: end, got: blob.len() });
        }
        let data: Vec<f64> = blob[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CheckpointError::ShapeMismatch {
                name: entry.name.clone(),
                detail: "non-finite value in blob".to_string(),
            });
        }
        let tensor = Tensor::new(entry.shape.clone(), data).map_err(|e| CheckpointError::ShapeMismatch {
            name: entry.name.clone(),
            detail: e.to_string(),
        })?;
        params
            .insert(entry.name.clone(), tensor)
            .map_err(|_| CheckpointError::DuplicateName(entry.name.clone()))?;
        expected_offset = end as u64;
    }
    if blob.len() != expected_offset as usize {
        return Err(CheckpointError::TruncatedBlob { expected: expected_offset as usize, got: blob.len() });
    }
    Ok(params)
}

pub fn load_checkpoint(path: &Path) -> Result<NamedParameterSet, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    checkpoint_from_bytes(&bytes)
}

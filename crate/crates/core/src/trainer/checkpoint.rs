//! `.simmodel` checkpoints.
//!
//! Layout (little-endian): magic `SMDL`, version `u8`, layer count `u32`, then per layer
//! rows `u32`, cols `u32`, `rows x cols` f64 weights (row-major), `rows` f64 bias,
//! and a trailing CRC32 over everything before it.

use std::fs;
use std::path::Path;

use super::matrix::Matrix;
use super::model::{Dense, EmbeddingModel};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"SMDL";
pub const MODEL_VERSION: u8 = 1;

pub fn encode_model(model: &EmbeddingModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + model.param_count() * 8 + 8 * model.layers.len() + 4);
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for layer in &model.layers {
        out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
        for w in layer.weights.as_slice().iter().chain(&layer.bias) {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<EmbeddingModel> {
    let corrupt = |m: &str| Error::CorruptSnapshot(format!("model checkpoint: {m}"));
    if bytes.len() < 13 {
        return Err(corrupt("truncated"));
    }
    let (payload, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(payload) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(corrupt("checksum mismatch"));
    }
    if &payload[..4] != MODEL_MAGIC {
        return Err(corrupt("bad magic"));
    }
    if payload[4] != MODEL_VERSION {
        return Err(Error::VersionUnsupported(payload[4]));
    }
    let mut rest = &payload[5..];
    let mut take = |n: usize| -> Result<&[u8]> {
        if n > rest.len() {
            return Err(corrupt("truncated"));
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head)
    };
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
    let layers_n = u32_at(take(4)?);
    let mut layers = Vec::with_capacity(layers_n.min(1024));
    for _ in 0..layers_n {
        let rows = u32_at(take(4)?);
        let cols = u32_at(take(4)?);
        let count = rows.checked_mul(cols).and_then(|c| c.checked_add(rows)).ok_or_else(|| corrupt("size overflow"))?;
        let raw = take(count.checked_mul(8).ok_or_else(|| corrupt("size overflow"))?)?;
        let mut values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let bias = values.split_off(rows * cols);
        layers.push(Dense {
            weights: Matrix::from_vec(rows, cols, values)?,
            bias,
        });
    }
    if !rest.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    EmbeddingModel::from_layers(layers)
}

pub fn save_model(model: &EmbeddingModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    decode_model(&fs::read(path)?)
}

//! EMB1 embedding record files and their JSON-lines equivalent.
//!
//! Binary layout (little-endian): magic `EMB1`, version `u8 = 1`, dtype `u8 = 0` (f32),
//! reserved `u16`, dim `u32`, count `u64`, then `count` records of
//! `{id u64, label i32 (-1 = none), ts u64, dim x f32}`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;
pub const HEADER_LEN: usize = 20;
pub const NO_LABEL: i32 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<u64>,
    pub vec: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emb1Header {
    pub dim: usize,
    pub count: u64,
}

pub const fn record_len(dim: usize) -> usize {
    8 + 4 + 8 + 4 * dim
}

pub fn label_to_wire(label: Option<i32>) -> i32 {
    label.unwrap_or(NO_LABEL)
}

pub fn label_from_wire(raw: i32) -> Option<i32> {
    (raw != NO_LABEL).then_some(raw)
}

pub fn encode_header(dim: usize, count: u64) -> [u8; HEADER_LEN] {
    let mut out = [0u8; HEADER_LEN];
    out[..4].copy_from_slice(MAGIC);
    out[4] = VERSION;
    out[5] = DTYPE_F32;
    out[8..12].copy_from_slice(&(dim as u32).to_le_bytes());
    out[12..20].copy_from_slice(&count.to_le_bytes());
    out
}

pub fn decode_header(bytes: &[u8]) -> Result<Emb1Header> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::CorruptSnapshot("EMB1 header truncated".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::CorruptSnapshot("bad EMB1 magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::VersionUnsupported(bytes[4]));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(Error::CorruptSnapshot(format!(
            "unsupported EMB1 dtype {}",
            bytes[5]
        )));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    Ok(Emb1Header { dim, count })
}

/// Appends one record. A record whose vector length differs from `dim` is a caller bug.
pub fn encode_record(record: &EmbeddingRecord, default_ts: u64, out: &mut Vec<u8>) {
    out.extend_from_slice(&record.id.to_le_bytes());
    out.extend_from_slice(&label_to_wire(record.label).to_le_bytes());
    out.extend_from_slice(&record.ts.unwrap_or(default_ts).to_le_bytes());
    for v in &record.vec {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn decode_record(bytes: &[u8], dim: usize) -> EmbeddingRecord {
    debug_assert_eq!(bytes.len(), record_len(dim));
    let id = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let label = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let ts = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let vec = bytes[20..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingRecord {
        id,
        label: label_from_wire(label),
        ts: Some(ts),
        vec,
    }
}

/// Serializes a complete EMB1 document. Records without a timestamp get `default_ts`.
pub fn encode(dim: usize, records: &[EmbeddingRecord], default_ts: u64) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * record_len(dim));
    out.extend_from_slice(&encode_header(dim, records.len() as u64));
    for record in records {
        if record.vec.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: record.vec.len(),
            });
        }
        encode_record(record, default_ts, &mut out);
    }
    Ok(out)
}

/// Parses a complete EMB1 document; the body must hold exactly `count` records.
pub fn decode(bytes: &[u8]) -> Result<(usize, Vec<EmbeddingRecord>)> {
    let header = decode_header(bytes)?;
    let body = &bytes[HEADER_LEN..];
    let len = record_len(header.dim);
    if !body.len().is_multiple_of(len) || (body.len() / len) as u64 != header.count {
        return Err(Error::CorruptSnapshot(format!(
            "EMB1 body of {} bytes does not hold {} records of dim {}",
            body.len(),
            header.count,
            header.dim
        )));
    }
    let records = body
        .chunks_exact(len)
        .map(|c| decode_record(c, header.dim))
        .collect();
    Ok((header.dim, records))
}

pub fn write_file(
    path: impl AsRef<Path>,
    dim: usize,
    records: &[EmbeddingRecord],
    default_ts: u64,
) -> Result<()> {
    let bytes = encode(dim, records, default_ts)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

pub fn parse_json_record(line: &str) -> Result<EmbeddingRecord> {
    serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))
}

/// Records read from a file together with the number of unparseable JSON lines.
#[derive(Debug, Clone, Default)]
pub struct LoadedRecords {
    pub records: Vec<EmbeddingRecord>,
    pub skipped: usize,
}

/// Reads a complete EMB1 file, or JSON lines when the file does not start with the EMB1 magic.
pub fn read_file(path: impl AsRef<Path>) -> Result<LoadedRecords> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        let (_, records) = decode(&bytes)?;
        return Ok(LoadedRecords {
            records,
            skipped: 0,
        });
    }
    let mut loaded = LoadedRecords::default();
    for line in BufReader::new(bytes.as_slice()).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_json_record(&line) {
            Ok(r) => loaded.records.push(r),
            Err(_) => loaded.skipped += 1,
        }
    }
    Ok(loaded)
}

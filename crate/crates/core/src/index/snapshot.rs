//! `.simidx` snapshot files.
//!
//! Layout (little-endian): magic `SIDX`, version `u8`, dim `u32`, count `u64`,
//! subcode_width `u16`, thresholds `dim x f32`, then `count` records of
//! `{id u64, label i32 (-1 = none), timestamp u64, vector dim x f32, code ceil(dim/64) x u64}`,
//! and a trailing CRC32 over everything before it. Records are written in ascending id order.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::Index;
use crate::binary::{self, words_for, SUBCODE_BITS};
use crate::emb1::{label_from_wire, label_to_wire};
use crate::error::{Error, Result};
use crate::vector;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"SIDX";
pub const SNAPSHOT_VERSION: u8 = 1;

const HEADER_LEN: usize = 4 + 1 + 4 + 8 + 2;
const CRC_LEN: usize = 4;

fn record_len(dim: usize) -> usize {
    8 + 4 + 8 + 4 * dim + 8 * words_for(dim)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptSnapshot(msg.into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of snapshot"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, out: &mut Vec<f32>) -> Result<()> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| corrupt("size overflow"))?)?;
        out.extend(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())));
        Ok(())
    }
}

impl Index {
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let dim = self.dim;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * dim + self.len() * record_len(dim) + CRC_LEN);
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.push(SNAPSHOT_VERSION);
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(SUBCODE_BITS as u16).to_le_bytes());
        for t in &self.thresholds {
            out.extend_from_slice(&t.to_le_bytes());
        }
        let mut slots: Vec<usize> = (0..self.len()).collect();
        slots.sort_unstable_by_key(|&s| self.ids[s]);
        for slot in slots {
            out.extend_from_slice(&self.ids[slot].to_le_bytes());
            out.extend_from_slice(&label_to_wire(self.labels[slot]).to_le_bytes());
            out.extend_from_slice(&self.timestamps[slot].to_le_bytes());
            for v in self.vector(slot) {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for w in self.code(slot) {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses a snapshot. The checksum is verified before any field is interpreted,
    /// so damaged files fail with `CorruptSnapshot`.
    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + CRC_LEN {
            return Err(corrupt("snapshot truncated"));
        }
        let (payload, crc) = bytes.split_at(bytes.len() - CRC_LEN);
        if crc32fast::hash(payload) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(corrupt("checksum mismatch"));
        }
        let mut cur = Cursor { bytes: payload, pos: 0 };
        if cur.take(4)? != SNAPSHOT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = cur.u8()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let dim = cur.u32()? as usize;
        let count = usize::try_from(cur.u64()?).map_err(|_| corrupt("count overflow"))?;
        let subcode = cur.u16()?;
        if usize::from(subcode) != SUBCODE_BITS {
            return Err(corrupt(format!("unsupported subcode width {subcode}")));
        }
        let expected = (HEADER_LEN + 4 * dim)
            .checked_add(count.checked_mul(record_len(dim)).ok_or_else(|| corrupt("size overflow"))?);
        if expected != Some(payload.len()) {
            return Err(corrupt("length does not match header"));
        }
        if dim == 0 && count > 0 {
            return Err(corrupt("entries without a dimension"));
        }

        let mut index = Index::new();
        if dim > 0 {
            let mut thresholds = Vec::with_capacity(dim);
            cur.f32s(dim, &mut thresholds)?;
            if thresholds.iter().any(|t| !t.is_finite()) {
                return Err(corrupt("non-finite threshold"));
            }
            index = Index::with_thresholds(thresholds)?;
        }
        let words = words_for(dim);
        index.slots = HashMap::with_capacity(count);
        let mut code = vec![0u64; words];
        for slot in 0..count {
            let id = cur.u64()?;
            let label = label_from_wire(cur.i32()?);
            let ts = cur.u64()?;
            let start = index.vectors.len();
            cur.f32s(dim, &mut index.vectors)?;
            let vec = &index.vectors[start..];
            if vec.iter().any(|v| !v.is_finite()) {
                return Err(corrupt(format!("non-finite vector for id {id}")));
            }
            let norm = vector::norm(vec);
            if (norm - 1.0).abs() > 1e-5 {
                return Err(corrupt(format!("vector for id {id} is not unit norm")));
            }
            binary::binarize_into(vec, &index.thresholds, &mut code);
            for &expected in &code {
                if cur.u64()? != expected {
                    return Err(corrupt(format!("code for id {id} does not match its vector")));
                }
            }
            if index.slots.insert(id, slot).is_some() {
                return Err(corrupt(format!("duplicate id {id}")));
            }
            index.codes.extend_from_slice(&code);
            index.inv_norms.push(1.0 / norm);
            index.ids.push(id);
            index.labels.push(label);
            index.timestamps.push(ts);
        }
        index.snapshot_version = SNAPSHOT_VERSION;
        Ok(index)
    }

    /// Writes a snapshot atomically (temp file + rename); returns the byte count.
    pub fn snapshot(&mut self, path: impl AsRef<Path>) -> Result<u64> {
        let path = path.as_ref();
        let bytes = self.to_snapshot_bytes();
        let tmp = path.with_extension("simidx.tmp");
        {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(&bytes)?;
            file.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        self.snapshot_version = SNAPSHOT_VERSION;
        Ok(bytes.len() as u64)
    }

    pub fn restore(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_snapshot_bytes(&fs::read(path)?)
    }
}

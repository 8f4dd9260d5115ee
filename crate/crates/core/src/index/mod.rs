//! Time-aware embedding index with exact, Hamming and two-stage search.
//!
//! Entries live in flat column arrays (vectors, codes, ids, ...) addressed by slot.
//! Slot order is irrelevant to results: every ranking ties on ascending id.

mod snapshot;
mod stream;

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

pub use snapshot::{SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use stream::{ingest_stream, IngestHandle, StreamOptions};

use crate::emb1;
use crate::binary::{self, words_for, BinaryCode};
use crate::error::{Error, Result};
use crate::vector::{self, normalize, Metric, Vector};

/// Index shared between request handlers and background ingestion.
pub type SharedIndex = Arc<RwLock<Index>>;

/// Default Hamming shortlist length as a multiple of `k`.
pub const DEFAULT_SHORTLIST_FACTOR: usize = 10;

/// An item to be inserted. The vector is normalized on the way in, and a label of
/// `-1` (the on-disk "no label" value) is stored as `None`.
#[derive(Debug, Clone)]
pub struct NewEntry {
    pub id: u64,
    pub vector: Vector,
    pub label: Option<i32>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: u64,
    pub embedding: Vec<f32>,
    pub code: BinaryCode,
    pub label: Option<i32>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub id: u64,
    pub distance: f64,
    pub similarity: f64,
    pub label: Option<i32>,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStats {
    pub count: usize,
    pub dim: usize,
    pub oldest_timestamp: Option<u64>,
    pub newest_timestamp: Option<u64>,
    /// Format version of the last snapshot written or restored, 0 if none.
    pub snapshot_version: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SearchMode {
    #[default]
    Exact,
    /// Ranked by Hamming distance alone; `distance` is the bit count and
    /// `similarity` is `1 - distance / width`.
    Hamming,
    /// Hamming shortlist then exact rerank; `None` uses `10 * k`.
    TwoStage { shortlist: Option<usize> },
}

#[derive(Debug, Default, Clone)]
pub struct Index {
    /// 0 until the first insert or a restore fixes it.
    dim: usize,
    thresholds: Vec<f32>,
    ids: Vec<u64>,
    labels: Vec<Option<i32>>,
    timestamps: Vec<u64>,
    vectors: Vec<f32>,
    inv_norms: Vec<f64>,
    codes: Vec<u64>,
    slots: HashMap<u64, usize>,
    snapshot_version: u8,
}

impl Index {
    pub fn new() -> Self {
        Self::default()
    }

    /// Empty index with a fixed dimension and explicit binarization thresholds.
    pub fn with_thresholds(thresholds: Vec<f32>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::EmptyVector);
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            dim: thresholds.len(),
            thresholds,
            ..Self::default()
        })
    }

    /// Bulk build: inserts every entry, then freezes per-dimension median thresholds.
    pub fn build(entries: impl IntoIterator<Item = NewEntry>) -> Result<Self> {
        let mut index = Self::new();
        for entry in entries {
            index.insert(entry)?;
        }
        index.refresh_thresholds();
        Ok(index)
    }

    pub fn shared(self) -> SharedIndex {
        Arc::new(RwLock::new(self))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Dimension, or `None` before the first insert.
    pub fn dim(&self) -> Option<usize> {
        (self.dim > 0).then_some(self.dim)
    }

    pub fn thresholds(&self) -> &[f32] {
        &self.thresholds
    }

    pub fn contains(&self, id: u64) -> bool {
        self.slots.contains_key(&id)
    }

    pub fn stats(&self) -> IndexStats {
        IndexStats {
            count: self.len(),
            dim: self.dim,
            oldest_timestamp: self.timestamps.iter().copied().min(),
            newest_timestamp: self.timestamps.iter().copied().max(),
            snapshot_version: self.snapshot_version,
        }
    }

    pub fn get(&self, id: u64) -> Option<IndexEntry> {
        self.slots.get(&id).map(|&slot| self.entry_at(slot))
    }

    /// All entries in ascending id order.
    pub fn entries(&self) -> Vec<IndexEntry> {
        let mut slots: Vec<usize> = (0..self.len()).collect();
        slots.sort_unstable_by_key(|&s| self.ids[s]);
        slots.into_iter().map(|s| self.entry_at(s)).collect()
    }

    fn entry_at(&self, slot: usize) -> IndexEntry {
        let words = words_for(self.dim);
        IndexEntry {
            id: self.ids[slot],
            embedding: self.vector(slot).to_vec(),
            code: BinaryCode::from_words(self.codes[slot * words..(slot + 1) * words].to_vec(), self.dim)
                .expect("stored codes have zero padding"),
            label: self.labels[slot],
            timestamp: self.timestamps[slot],
        }
    }

    fn vector(&self, slot: usize) -> &[f32] {
        &self.vectors[slot * self.dim..(slot + 1) * self.dim]
    }

    fn code(&self, slot: usize) -> &[u64] {
        let words = words_for(self.dim);
        &self.codes[slot * words..(slot + 1) * words]
    }

    /// Normalizes a vector into the stored `f32` representation.
    fn prepare(&self, v: &Vector) -> Result<Vec<f32>> {
        if self.dim > 0 && v.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        Ok(normalize(v)?.to_f32())
    }

    /// Inserts a new entry; fails with `DuplicateId` if the id is present.
    pub fn insert(&mut self, entry: NewEntry) -> Result<IndexEntry> {
        self.insert_inner(entry, false)
    }

    /// Inserts or replaces (remove + insert) the entry with this id.
    pub fn upsert(&mut self, entry: NewEntry) -> Result<IndexEntry> {
        self.insert_inner(entry, true)
    }

    fn insert_inner(&mut self, entry: NewEntry, upsert: bool) -> Result<IndexEntry> {
        let embedding = self.prepare(&entry.vector)?;
        if self.contains(entry.id) {
            if !upsert {
                return Err(Error::DuplicateId(entry.id));
            }
            self.remove(entry.id);
        }
        if self.dim == 0 {
            self.dim = embedding.len();
            self.thresholds = vec![0.0; self.dim];
        }
        let slot = self.len();
        let words = words_for(self.dim);
        self.codes.resize(self.codes.len() + words, 0);
        binary::binarize_into(&embedding, &self.thresholds, &mut self.codes[slot * words..]);
        self.inv_norms.push(1.0 / vector::norm(&embedding));
        self.vectors.extend_from_slice(&embedding);
        self.ids.push(entry.id);
        self.labels.push(entry.label.filter(|&l| l != emb1::NO_LABEL));
        self.timestamps.push(entry.timestamp);
        self.slots.insert(entry.id, slot);
        Ok(self.entry_at(slot))
    }

    /// Removes an entry, returning whether it existed.
    pub fn remove(&mut self, id: u64) -> bool {
        let Some(slot) = self.slots.remove(&id) else {
            return false;
        };
        let last = self.len() - 1;
        if slot != last {
            let moved = self.ids[last];
            self.slots.insert(moved, slot);
            let (d, w) = (self.dim, words_for(self.dim));
            self.vectors.copy_within(last * d..(last + 1) * d, slot * d);
            self.codes.copy_within(last * w..(last + 1) * w, slot * w);
        }
        self.ids.swap_remove(slot);
        self.labels.swap_remove(slot);
        self.timestamps.swap_remove(slot);
        self.inv_norms.swap_remove(slot);
        self.vectors.truncate(last * self.dim);
        self.codes.truncate(last * words_for(self.dim));
        true
    }

    /// Removes every entry with `timestamp < cutoff`.
    pub fn evict_older_than(&mut self, cutoff: u64) -> usize {
        let stale: Vec<u64> = self
            .ids
            .iter()
            .zip(&self.timestamps)
            .filter(|(_, &ts)| ts < cutoff)
            .map(|(&id, _)| id)
            .collect();
        for &id in &stale {
            self.remove(id);
        }
        stale.len()
    }

    /// Recomputes thresholds as per-dimension medians of the stored corpus and recodes
    /// every entry. An empty index keeps its current thresholds.
    pub fn refresh_thresholds(&mut self) {
        if self.is_empty() {
            return;
        }
        self.thresholds = binary::median_thresholds(self.vectors.chunks_exact(self.dim), self.dim);
        let words = words_for(self.dim);
        for (vec, code) in self
            .vectors
            .chunks_exact(self.dim)
            .zip(self.codes.chunks_exact_mut(words))
        {
            binary::binarize_into(vec, &self.thresholds, code);
        }
    }

    /// Binary code the index would assign to `q`.
    pub fn encode_query(&self, q: &Vector) -> Result<BinaryCode> {
        let prepared = self.prepare(q)?;
        binary::binarize_slice(&prepared, &self.thresholds)
    }

    fn check_query(&self, q: &Vector, k: usize) -> Result<Option<Vec<f32>>> {
        if k == 0 {
            return Err(Error::InvalidK);
        }
        if self.is_empty() && self.dim == 0 {
            return Ok(None);
        }
        let prepared = self.prepare(q)?;
        Ok((!self.is_empty()).then_some(prepared))
    }

    fn slot_distance(&self, q: &[f32], q_inv_norm: f64, slot: usize, metric: Metric) -> f64 {
        let v = self.vector(slot);
        match metric {
            Metric::SquaredEuclidean => vector::squared_euclidean(q, v),
            Metric::Euclidean => vector::squared_euclidean(q, v).sqrt(),
            Metric::Cosine => vector::cosine_scaled(q, v, q_inv_norm, self.inv_norms[slot]),
        }
    }

    fn result(&self, slot: usize, distance: f64, similarity: f64) -> QueryResult {
        QueryResult {
            id: self.ids[slot],
            distance,
            similarity,
            label: self.labels[slot],
            timestamp: self.timestamps[slot],
        }
    }

    /// Keeps the `k` smallest `(distance, id)` pairs, sorted.
    fn top_k<D: Copy, F: Fn(&D, &D) -> std::cmp::Ordering>(
        &self,
        mut scored: Vec<(D, usize)>,
        k: usize,
        cmp: F,
    ) -> Vec<(D, usize)> {
        let order = |a: &(D, usize), b: &(D, usize)| {
            cmp(&a.0, &b.0).then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        scored
    }

    /// The `k` nearest entries under `metric`, ascending distance, ties by ascending id.
    pub fn query_exact(&self, q: &Vector, k: usize, metric: Metric) -> Result<Vec<QueryResult>> {
        let Some(q) = self.check_query(q, k)? else {
            return Ok(Vec::new());
        };
        let slots = 0..self.len();
        Ok(self.rank_exact(&q, slots, k, metric))
    }

    fn rank_exact(
        &self,
        q: &[f32],
        slots: impl Iterator<Item = usize>,
        k: usize,
        metric: Metric,
    ) -> Vec<QueryResult> {
        let q_inv = 1.0 / vector::norm(q);
        let scored: Vec<(f64, usize)> = slots
            .map(|s| (self.slot_distance(q, q_inv, s, metric), s))
            .collect();
        self.top_k(scored, k, f64::total_cmp)
            .into_iter()
            .map(|(d, s)| self.result(s, d, metric.similarity(d)))
            .collect()
    }

    fn hamming_slots(&self, q: &[f32], r: usize) -> Vec<(u32, usize)> {
        let mut code = vec![0u64; words_for(self.dim)];
        binary::binarize_into(q, &self.thresholds, &mut code);
        let scored: Vec<(u32, usize)> = (0..self.len())
            .map(|s| (binary::hamming_words(&code, self.code(s)), s))
            .collect();
        self.top_k(scored, r, u32::cmp)
    }

    /// The `r` entries whose codes are closest in Hamming distance to the binarized query.
    pub fn query_hamming(&self, q: &Vector, r: usize) -> Result<Vec<(u64, u32)>> {
        let Some(q) = self.check_query(q, r)? else {
            return Ok(Vec::new());
        };
        Ok(self
            .hamming_slots(&q, r)
            .into_iter()
            .map(|(h, s)| (self.ids[s], h))
            .collect())
    }

    /// Hamming shortlist of `shortlist` entries reranked by the exact metric.
    pub fn query_two_stage(
        &self,
        q: &Vector,
        k: usize,
        shortlist: usize,
        metric: Metric,
    ) -> Result<Vec<QueryResult>> {
        if shortlist < k {
            return Err(Error::ShortlistTooSmall { shortlist, k });
        }
        let Some(q) = self.check_query(q, k)? else {
            return Ok(Vec::new());
        };
        let candidates = self.hamming_slots(&q, shortlist);
        Ok(self.rank_exact(&q, candidates.into_iter().map(|(_, s)| s), k, metric))
    }

    /// Dispatches on `mode`, optionally dropping one id (e.g. the query item itself).
    pub fn search(
        &self,
        q: &Vector,
        k: usize,
        mode: SearchMode,
        metric: Metric,
        exclude: Option<u64>,
    ) -> Result<Vec<QueryResult>> {
        let fetch = k + usize::from(exclude.is_some_and(|id| self.contains(id)));
        let mut hits = match mode {
            SearchMode::Exact => self.query_exact(q, fetch, metric)?,
            SearchMode::TwoStage { shortlist } => {
                let shortlist = shortlist.unwrap_or(DEFAULT_SHORTLIST_FACTOR * k);
                if shortlist < k {
                    return Err(Error::ShortlistTooSmall { shortlist, k });
                }
                self.query_two_stage(q, fetch, shortlist.max(fetch), metric)?
            }
            SearchMode::Hamming => {
                let width = self.dim.max(1) as f64;
                self.query_hamming(q, fetch)?
                    .into_iter()
                    .map(|(id, h)| {
                        let slot = self.slots[&id];
                        self.result(slot, f64::from(h), 1.0 - f64::from(h) / width)
                    })
                    .collect()
            }
        };
        if let Some(id) = exclude {
            hits.retain(|h| h.id != id);
        }
        hits.truncate(k);
        Ok(hits)
    }

    /// Stored (normalized) vector of an entry, widened to `f64`.
    pub fn vector_of(&self, id: u64) -> Option<Vector> {
        let slot = *self.slots.get(&id)?;
        Vector::from_f32(self.vector(slot)).ok()
    }
}

//! Served result sets and the relevance feedback recorded against them.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub query_ref: String,
    pub result_id: u64,
    pub relevant: bool,
    #[serde(default)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Default)]
struct Served {
    ids: HashSet<u64>,
    recorded: HashSet<u64>,
}

/// Bounded map from `query_ref` to the ids it served, plus the append-only log.
#[derive(Debug)]
pub struct FeedbackStore {
    capacity: usize,
    order: VecDeque<String>,
    served: HashMap<String, Served>,
    log: Option<PathBuf>,
}

impl FeedbackStore {
    pub fn new(capacity: usize, log: Option<PathBuf>) -> Self {
        Self {
            capacity: capacity.max(1),
            order: VecDeque::new(),
            served: HashMap::new(),
            log,
        }
    }

    pub fn remember(&mut self, query_ref: String, ids: impl IntoIterator<Item = u64>) {
        while self.order.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.served.remove(&old);
            }
        }
        self.served.insert(
            query_ref.clone(),
            Served {
                ids: ids.into_iter().collect(),
                recorded: HashSet::new(),
            },
        );
        self.order.push_back(query_ref);
    }

    pub fn is_known(&self, query_ref: &str) -> bool {
        self.served.contains_key(query_ref)
    }

    /// Validates the whole batch, then appends the records not seen before.
    /// Returns how many were stored.
    pub fn record(&mut self, records: &[FeedbackRecord], now: u64) -> ApiResult<usize> {
        for r in records {
            let served = self
                .served
                .get(&r.query_ref)
                .ok_or_else(|| ApiError::not_found(format!("unknown query_ref {:?}", r.query_ref)))?;
            if !served.ids.contains(&r.result_id) {
                return Err(ApiError::bad_request(format!(
                    "result {} was not served for query_ref {:?}",
                    r.result_id, r.query_ref
                )));
            }
        }
        let mut fresh: Vec<&FeedbackRecord> = Vec::new();
        let mut batch_seen = HashSet::new();
        for r in records {
            let already = self.served[&r.query_ref].recorded.contains(&r.result_id);
            if !already && batch_seen.insert((r.query_ref.as_str(), r.result_id)) {
                fresh.push(r);
            }
        }
        if let Some(path) = &self.log {
            if !fresh.is_empty() {
                let mut out = Vec::new();
                for r in &fresh {
                    let line = FeedbackRecord {
                        timestamp: Some(r.timestamp.unwrap_or(now)),
                        ..(*r).clone()
                    };
                    serde_json::to_writer(&mut out, &line).map_err(|e| ApiError::internal(e.to_string()))?;
                    out.push(b'\n');
                }
                let mut file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| ApiError::internal(format!("feedback log {}: {e}", path.display())))?;
                file.write_all(&out)
                    .and_then(|_| file.flush())
                    .map_err(|e| ApiError::internal(format!("feedback log {}: {e}", path.display())))?;
            }
        }
        for r in &fresh {
            if let Some(s) = self.served.get_mut(&r.query_ref) {
                s.recorded.insert(r.result_id);
            }
        }
        Ok(fresh.len())
    }
}

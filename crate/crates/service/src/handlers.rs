use std::path::{Component, Path, PathBuf};
use std::sync::atomic::Ordering;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::Json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use simsearch_core::emb1::EmbeddingRecord;
use simsearch_core::{normalize, now_secs, Index, IndexStats, Metric, NewEntry, QueryResult, SearchMode, Vector};

use crate::error::{ApiError, ApiResult};
use crate::feedback::FeedbackRecord;
use crate::AppState;

const DEFAULT_K: i64 = 10;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

#[derive(Debug, Deserialize)]
pub struct ItemsParams {
    #[serde(default)]
    strict: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemsResponse {
    pub ingested: usize,
    pub skipped: usize,
}

enum Rejection {
    Malformed(String),
    Dim { expected: usize, got: usize },
}

/// Upserts a batch. Strict mode (the default) applies all records or none;
/// `?strict=false` skips records that fail validation.
pub async fn post_items(
    State(state): State<AppState>,
    Query(params): Query<ItemsParams>,
    body: Bytes,
) -> ApiResult<Json<ItemsResponse>> {
    let strict = params.strict.unwrap_or(true);
    let raw: Vec<Value> = parse_body(&body)?;
    let parsed: Vec<Result<(EmbeddingRecord, Vector), String>> = raw
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let record: EmbeddingRecord =
                serde_json::from_value(v).map_err(|e| format!("record {i}: {e}"))?;
            let vector = Vector::from_f32(&record.vec).map_err(|e| format!("record {i}: {e}"))?;
            normalize(&vector).map_err(|e| format!("record {i}: {e}"))?;
            Ok((record, vector))
        })
        .collect();
    let index = state.index().clone();
    let response = blocking(move || {
        let now = now_secs();
        let mut guard = index.write();
        let mut expected = guard.dim();
        let mut accepted = Vec::with_capacity(parsed.len());
        let mut skipped = 0;
        for item in parsed {
            let checked = item.map_err(Rejection::Malformed).and_then(|(record, vector)| {
                let dim = *expected.get_or_insert(vector.dim());
                if vector.dim() == dim {
                    Ok((record, vector))
                } else {
                    Err(Rejection::Dim { expected: dim, got: vector.dim() })
                }
            });
            match checked {
                Ok(ok) => accepted.push(ok),
                Err(_) if !strict => skipped += 1,
                Err(Rejection::Malformed(m)) => return Err(ApiError::bad_request(m)),
                Err(Rejection::Dim { expected, got }) => {
                    return Err(ApiError::conflict(format!("dimension mismatch: expected {expected}, got {got}")))
                }
            }
        }
        let ingested = accepted.len();
        for (record, vector) in accepted {
            guard.upsert(NewEntry {
                id: record.id,
                vector,
                label: record.label,
                timestamp: record.ts.unwrap_or(now),
            })?;
        }
        Ok(ItemsResponse { ingested, skipped })
    })
    .await?;
    Ok(Json(response))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SearchRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<i64>,
    /// `exact` (default), `hamming` or `two_stage`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Hamming shortlist length for `two_stage`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shortlist: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query_ref: String,
    pub hits: Vec<QueryResult>,
    pub took_s: f64,
}

pub fn parse_mode(name: &str, shortlist: Option<usize>) -> Result<SearchMode, String> {
    match name {
        "exact" => Ok(SearchMode::Exact),
        "hamming" => Ok(SearchMode::Hamming),
        "two_stage" | "two-stage" => Ok(SearchMode::TwoStage { shortlist }),
        other => Err(format!("unknown mode {other:?}; expected exact, hamming or two_stage")),
    }
}

pub async fn search(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<SearchResponse>> {
    let req: SearchRequest = parse_body(&body)?;
    let k = req.k.unwrap_or(DEFAULT_K);
    if k < 1 {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("k must be at least 1, got {k}")));
    }
    let k = usize::try_from(k).map_err(|_| ApiError::bad_request("k too large"))?;
    let mode = parse_mode(req.mode.as_deref().unwrap_or("exact"), req.shortlist).map_err(ApiError::bad_request)?;
    let metric = req.metric.unwrap_or_default();
    let query = match (req.vector, req.item_id) {
        (Some(v), None) => Some(Vector::new(v).map_err(|e| ApiError::bad_request(format!("bad vector: {e}")))?),
        (None, Some(_)) => None,
        _ => return Err(ApiError::bad_request("exactly one of vector or item_id is required")),
    };
    let index = state.index().clone();
    let item_id = req.item_id;
    let (hits, took_s) = blocking(move || {
        let guard = index.read();
        let start = Instant::now();
        let (q, exclude) = match (query, item_id) {
            (Some(q), _) => (q, None),
            (None, Some(id)) => {
                let q = guard
                    .vector_of(id)
                    .ok_or_else(|| ApiError::not_found(format!("unknown item_id {id}")))?;
                (q, Some(id))
            }
            (None, None) => unreachable!("validated above"),
        };
        let hits = guard.search(&q, k, mode, metric, exclude).map_err(|e| match e {
            simsearch_core::Error::DimMismatch { .. } => ApiError::bad_request(format!("bad vector: {e}")),
            other => other.into(),
        })?;
        Ok((hits, start.elapsed().as_secs_f64().max(1e-9)))
    })
    .await?;
    let n = state.inner.next_ref.fetch_add(1, Ordering::Relaxed);
    let query_ref = format!("{:016x}{n:08x}", state.inner.ref_salt);
    state.inner.feedback.lock().remember(query_ref.clone(), hits.iter().map(|h| h.id));
    Ok(Json(SearchResponse { query_ref, hits, took_s }))
}

pub async fn feedback(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let records: Vec<FeedbackRecord> = parse_body(&body)?;
    let stored = state.inner.feedback.lock().record(&records, now_secs())?;
    Ok(Json(json!({ "stored": stored })))
}

#[derive(Debug, Deserialize)]
struct EvictRequest {
    older_than: u64,
}

pub async fn evict(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: EvictRequest = parse_body(&body)?;
    let evicted = state.index().write().evict_older_than(req.older_than);
    Ok(Json(json!({ "evicted": evicted })))
}

pub async fn stats(State(state): State<AppState>) -> Json<IndexStats> {
    Json(state.index().read().stats())
}

pub async fn healthz(State(state): State<AppState>) -> (StatusCode, Json<Value>) {
    match state.index().try_read_for(Duration::from_millis(500)) {
        Some(_) => (StatusCode::OK, Json(json!({ "status": "ok" }))),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "index busy" }))),
    }
}

#[derive(Debug, Deserialize)]
struct PathRequest {
    #[serde(default)]
    path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotResponse {
    pub path: PathBuf,
    pub bytes: u64,
    pub count: usize,
}

const DEFAULT_SNAPSHOT_NAME: &str = "index.simidx";

fn resolve_path(dir: Option<&Path>, requested: Option<PathBuf>) -> ApiResult<PathBuf> {
    match dir {
        Some(dir) => {
            let rel = requested.unwrap_or_else(|| PathBuf::from(DEFAULT_SNAPSHOT_NAME));
            if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
                return Err(ApiError::bad_request(format!(
                    "snapshot path {} must be relative to the snapshot directory",
                    rel.display()
                )));
            }
            Ok(dir.join(rel))
        }
        None => requested.ok_or_else(|| ApiError::bad_request("path is required")),
    }
}

/// Refreshes the binarization thresholds, then writes the snapshot.
pub async fn snapshot(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<SnapshotResponse>> {
    let req: PathRequest = parse_body(&body)?;
    let path = resolve_path(state.config().snapshot_dir.as_deref(), req.path)?;
    let index = state.index().clone();
    let response = blocking(move || {
        let mut guard = index.write();
        guard.refresh_thresholds();
        let bytes = guard.snapshot(&path)?;
        Ok(SnapshotResponse { path, bytes, count: guard.len() })
    })
    .await?;
    Ok(Json(response))
}

/// Replaces the live index with a snapshot. A non-empty index only accepts a
/// snapshot of the same dimension.
pub async fn restore(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<IndexStats>> {
    let req: PathRequest = parse_body(&body)?;
    let path = resolve_path(state.config().snapshot_dir.as_deref(), req.path)?;
    let index = state.index().clone();
    let stats = blocking(move || {
        let restored = Index::restore(&path).map_err(|e| match e {
            simsearch_core::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                ApiError::not_found(format!("no snapshot at {}", path.display()))
            }
            other => other.into(),
        })?;
        let mut guard = index.write();
        if let (false, Some(live), Some(incoming)) = (guard.is_empty(), guard.dim(), restored.dim()) {
            if live != incoming {
                return Err(ApiError::conflict(format!(
                    "snapshot dimension {incoming} conflicts with live index dimension {live}"
                )));
            }
        }
        *guard = restored;
        Ok(guard.stats())
    })
    .await?;
    Ok(Json(stats))
}

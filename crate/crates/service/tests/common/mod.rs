#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use simsearch_core::Index;
use simsearch_service::{router, AppState, ServiceConfig};
use tower::ServiceExt;

pub fn state() -> AppState {
    state_with(ServiceConfig::default())
}

pub fn state_with(config: ServiceConfig) -> AppState {
    AppState::new(Index::new().shared(), config)
}

pub async fn call(state: &AppState, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let body = body.map(|b| b.to_string()).unwrap_or_default();
    call_raw(state, method, uri, body).await
}

pub async fn call_raw(state: &AppState, method: &str, uri: &str, body: String) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub fn record(id: u64, vec: &[f64], label: Option<i32>, ts: Option<u64>) -> Value {
    let mut r = serde_json::json!({ "id": id, "vec": vec });
    if let Some(l) = label {
        r["label"] = l.into();
    }
    if let Some(t) = ts {
        r["ts"] = t.into();
    }
    r
}

pub fn hit_ids(resp: &Value) -> Vec<u64> {
    resp["hits"].as_array().unwrap().iter().map(|h| h["id"].as_u64().unwrap()).collect()
}

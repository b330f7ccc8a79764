#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use holodeck_core::neurocube::{synth_network, NetworkDataset, SynthSpec};
use holoserve::{router, AppState, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

/// Hand-driven nanosecond clock.
#[derive(Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn set(&self, ns: u64) {
        self.0.store(ns, Ordering::SeqCst);
    }
    pub fn advance_s(&self, s: f64) {
        self.0.fetch_add((s * 1e9).round() as u64, Ordering::SeqCst);
    }
    pub fn now(&self) -> holoserve::Now {
        let c = self.0.clone();
        Arc::new(move || c.load(Ordering::SeqCst))
    }
}

pub fn small_dataset(name: &str, seed: u64) -> NetworkDataset {
    let mut d = synth_network(&SynthSpec {
        n_neurons: 2_000,
        n_connections: 10_000,
        spike_rate_hz: 5.0,
        duration_s: 60.0,
        seed,
        ..SynthSpec::default()
    })
    .unwrap();
    d.name = name.to_string();
    d
}

pub fn test_config() -> ServiceConfig {
    ServiceConfig {
        pose_port: 0,
        session_grace_s: 10.0,
        ..ServiceConfig::default()
    }
}

pub fn state_with(config: ServiceConfig, clock: &ManualClock) -> Arc<AppState> {
    let datasets = vec![small_dataset("alpha", 1), small_dataset("beta", 2)];
    Arc::new(AppState::new(config, datasets, Vec::new(), clock.now()).unwrap())
}

pub async fn call(state: &Arc<AppState>, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

pub async fn call_json(state: &Arc<AppState>, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let (status, bytes) = call(state, method, uri, body).await;
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, v)
}

pub async fn new_session(state: &Arc<AppState>, dataset: &str) -> String {
    let (status, v) = call_json(state, Method::POST, "/sessions", Some(&format!(r#"{{"dataset":"{dataset}"}}"#))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session"].as_str().unwrap().to_string()
}

use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::rejection::BytesRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use holodeck_core::lod::{CameraState, DrawList, FrameBudget};
use holodeck_core::neurocube::NeuronKind;
use holodeck_core::tracking::Pose;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::session::{PlaybackRequest, Session};
use crate::state::AppState;
use crate::stream;

pub type Shared = Arc<AppState>;

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    Conflict(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

/// JSON body whose parse errors name the offending field. An empty body
/// reads as `{}`.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e: BytesRejection| ApiError::BadRequest(e.body_text()))?;
        parse_body(&bytes).map(JsonBody)
    }
}

pub fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let bytes: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            ApiError::BadRequest(e.into_inner().to_string())
        } else {
            ApiError::BadRequest(format!("{path}: {}", e.into_inner()))
        }
    })
}

/// Camera as viewers send it: position in world meters, orientation as a
/// (w, x, y, z) quaternion. The camera looks down its local -z axis.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CameraBody {
    pub position: [f64; 3],
    pub orientation: [f64; 4],
    pub vertical_fov_rad: f64,
    pub aspect: f64,
    pub near_m: f64,
    pub far_m: f64,
}

impl CameraBody {
    pub fn to_camera(self) -> Result<CameraState, ApiError> {
        let [w, x, y, z] = self.orientation;
        let q = Quaternion::new(w, x, y, z);
        if !(q.norm() > 1e-9) {
            return Err(ApiError::BadRequest("orientation: quaternion must be non-zero".into()));
        }
        let camera = CameraState {
            pose: Pose::new(Vector3::from(self.position), UnitQuaternion::from_quaternion(q)),
            vertical_fov_rad: self.vertical_fov_rad,
            aspect: self.aspect,
            near_m: self.near_m,
            far_m: self.far_m,
        };
        camera.validate().map_err(|e| ApiError::BadRequest(e.to_string()))?;
        Ok(camera)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PickBody {
    /// Dataset coordinates.
    pub point: [f64; 3],
    pub max_radius: f64,
}

/// One sample or a batch.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FrameTimes {
    One(u64),
    Many(Vec<u64>),
}

impl FrameTimes {
    pub fn as_slice(&self) -> &[u64] {
        match self {
            FrameTimes::One(v) => std::slice::from_ref(v),
            FrameTimes::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryBody {
    pub frame_ns: FrameTimes,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    #[serde(default)]
    dataset: Option<String>,
    #[serde(default)]
    budget: Option<FrameBudget>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DrawListBody<'a> {
    pub level: Option<u16>,
    pub neurons: &'a [u32],
    pub tiers: &'a [u8],
    pub connections: &'a [u32],
    pub estimated_cost_ns: f64,
    pub primitive_budget: u64,
}

impl<'a> DrawListBody<'a> {
    pub fn new(list: &'a DrawList, budget: &FrameBudget) -> Self {
        Self {
            level: list.level,
            neurons: &list.neurons,
            tiers: &list.tiers,
            connections: &list.connections,
            estimated_cost_ns: list.estimated_cost_ns,
            primitive_budget: budget.primitive_budget,
        }
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/datasets", get(list_datasets))
        .route("/datasets/{id}/meta", get(dataset_meta))
        .route("/datasets/{id}/positions", get(dataset_positions))
        .route("/datasets/{id}/kinds", get(dataset_kinds))
        .route("/datasets/{id}/connections", get(dataset_connections))
        .route("/scenes", get(list_scenes))
        .route("/scenes/{id}", get(scene_bytes))
        .route("/bodies", get(bodies))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(session_info).delete(delete_session))
        .route("/sessions/{id}/clock", get(clock))
        .route("/sessions/{id}/playback", post(playback))
        .route("/sessions/{id}/pick", post(pick))
        .route("/sessions/{id}/telemetry", post(telemetry))
        .route("/sessions/{id}/camera", post(camera))
        .route("/sessions/{id}/drawlist", get(draw_list))
        .route("/sessions/{id}/spikes", get(spikes))
        .route("/sessions/{id}/stream", get(stream::upgrade))
        .route("/metrics/latency", get(latency))
        .with_state(state)
}

fn find_session(state: &AppState, id: &str) -> Result<Arc<Session>, ApiError> {
    state.session(id).ok_or_else(|| ApiError::NotFound(format!("no session '{id}'")))
}

fn find_dataset<'a>(state: &'a AppState, id: &str) -> Result<&'a Arc<crate::state::DatasetEntry>, ApiError> {
    state.dataset(id).ok_or_else(|| ApiError::NotFound(format!("no dataset '{id}'")))
}

async fn list_datasets(State(state): State<Shared>) -> Json<Value> {
    Json(Value::Array(
        state
            .datasets
            .iter()
            .map(|d| {
                json!({
                    "id": d.id,
                    "neurons": d.dataset.neuron_count(),
                    "connections": d.dataset.connection_count(),
                    "spikes": d.dataset.spike_count(),
                    "units": d.dataset.units,
                })
            })
            .collect(),
    ))
}

async fn dataset_meta(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let d = find_dataset(&state, &id)?;
    let ds = &d.dataset;
    Ok(Json(json!({
        "id": d.id,
        "name": ds.name,
        "units": ds.units,
        "neurons": ds.neuron_count(),
        "connections": ds.connection_count(),
        "spikes": ds.spike_count(),
        "extent": ds.extent(),
        "max_abs_weight": ds.max_abs_weight(),
        "last_spike_time": ds.spike_times().last().copied(),
        "placement": state.config.placement,
        "warnings": ds.warnings(),
    })))
}

fn binary(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], Body::from(bytes)).into_response()
}

/// `f32` little-endian x, y, z per neuron.
async fn dataset_positions(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let d = find_dataset(&state, &id)?.clone();
    let bytes = d.dataset.positions().iter().flatten().flat_map(|v| v.to_le_bytes()).collect();
    Ok(binary(bytes))
}

/// One byte per neuron: 0 regular, 1 input.
async fn dataset_kinds(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let d = find_dataset(&state, &id)?;
    let bytes = d.dataset.kinds().iter().map(|k| u8::from(*k == NeuronKind::Input)).collect();
    Ok(binary(bytes))
}

/// Per connection, in id order: `u32` pre, `u32` post, `f32` weight, all
/// little-endian.
async fn dataset_connections(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let d = find_dataset(&state, &id)?.clone();
    let ds = &d.dataset;
    let mut bytes = Vec::with_capacity(ds.connection_count() * 12);
    for ((pre, post), w) in ds.connection_pre().zip(ds.connection_post()).zip(ds.connection_weight()) {
        bytes.extend_from_slice(&pre.to_le_bytes());
        bytes.extend_from_slice(&post.to_le_bytes());
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    Ok(binary(bytes))
}

async fn list_scenes(State(state): State<Shared>) -> Json<Value> {
    Json(json!(state.scenes.iter().map(|s| &s.summary).collect::<Vec<_>>()))
}

async fn scene_bytes(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let scene = state
        .scenes
        .iter()
        .find(|s| s.summary.id == id)
        .ok_or_else(|| ApiError::NotFound(format!("no scene '{id}'")))?;
    Ok(binary(scene.bytes.as_ref().clone()))
}

async fn bodies(State(state): State<Shared>) -> Json<Value> {
    Json(json!(state.bodies))
}

fn session_json(state: &AppState, s: &Session) -> Value {
    let now = (state.now)();
    json!({
        "session": s.id,
        "dataset": s.dataset.id,
        "clock": s.clock(now),
        "budget": s.budget(now),
    })
}

async fn create_session(State(state): State<Shared>, JsonBody(req): JsonBody<NewSession>) -> Result<(StatusCode, Json<Value>), ApiError> {
    let dataset = match &req.dataset {
        Some(id) => find_dataset(&state, id)?.clone(),
        None => state.datasets.first().cloned().ok_or_else(|| ApiError::NotFound("no datasets loaded".into()))?,
    };
    let budget = req.budget.unwrap_or(state.config.budget);
    if budget.target_frame_ns == 0 || !(budget.ns_per_point >= 0.0 && budget.ns_per_line >= 0.0) {
        return Err(ApiError::BadRequest("budget: target must be positive and costs non-negative".into()));
    }
    let session = state.create_session(dataset, budget);
    Ok((StatusCode::CREATED, Json(session_json(&state, &session))))
}

async fn list_sessions(State(state): State<Shared>) -> Json<Value> {
    let mut ids: Vec<String> = state.sessions.read().keys().cloned().collect();
    ids.sort();
    Json(json!(ids))
}

async fn session_info(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = find_session(&state, &id)?;
    let mut v = session_json(&state, &s);
    v["telemetry"] = json!(s.telemetry_samples());
    Ok(Json(v))
}

async fn delete_session(State(state): State<Shared>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    if state.remove_session(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::NotFound(format!("no session '{id}'")))
    }
}

async fn clock(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = find_session(&state, &id)?;
    Ok(Json(json!(s.clock((state.now)()))))
}

async fn playback(
    State(state): State<Shared>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<PlaybackRequest>,
) -> Result<Json<Value>, ApiError> {
    let s = find_session(&state, &id)?;
    let snap = s.playback((state.now)(), req).map_err(ApiError::BadRequest)?;
    Ok(Json(json!(snap)))
}

pub fn pick_json(state: &AppState, s: &Session, req: &PickBody) -> Result<Value, ApiError> {
    if !(req.max_radius >= 0.0) || !req.point.iter().all(|v| v.is_finite()) {
        return Err(ApiError::BadRequest("max_radius must be >= 0 and point finite".into()));
    }
    Ok(json!({ "hit": s.pick((state.now)(), req.point, req.max_radius) }))
}

async fn pick(State(state): State<Shared>, Path(id): Path<String>, JsonBody(req): JsonBody<PickBody>) -> Result<Json<Value>, ApiError> {
    let s = find_session(&state, &id)?;
    Ok(Json(pick_json(&state, &s, &req)?))
}

async fn telemetry(
    State(state): State<Shared>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<TelemetryBody>,
) -> Result<Json<Value>, ApiError> {
    let s = find_session(&state, &id)?;
    let budget = s.telemetry((state.now)(), req.frame_ns.as_slice());
    Ok(Json(json!({
        "primitive_budget": budget.primitive_budget,
        "target_frame_ns": budget.target_frame_ns,
    })))
}

async fn camera(State(state): State<Shared>, Path(id): Path<String>, JsonBody(req): JsonBody<CameraBody>) -> Result<StatusCode, ApiError> {
    let s = find_session(&state, &id)?;
    s.set_camera((state.now)(), req.to_camera()?);
    Ok(StatusCode::NO_CONTENT)
}

/// Builds (or reuses, within the throttle interval) the draw list on a
/// blocking thread. `None` when no camera is set.
pub async fn build_draw_json(state: &Shared, s: &Arc<Session>) -> Option<(Value, bool)> {
    let (state, s) = (state.clone(), s.clone());
    tokio::task::spawn_blocking(move || {
        let now = (state.now)();
        let interval = state.config.draw_interval_ms * 1_000_000;
        let (list, fresh) = s.draw_list(now, &state.config.placement, interval)?;
        let budget = s.budget(now);
        Some((json!(DrawListBody::new(&list, &budget)), fresh))
    })
    .await
    .ok()
    .flatten()
}

async fn draw_list(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = find_session(&state, &id)?;
    match build_draw_json(&state, &s).await {
        Some((v, _)) => Ok(Json(v)),
        None => Err(ApiError::Conflict("set a camera first".into())),
    }
}

/// Next spike window over HTTP, for clients without a stream. Shares the
/// tiling with the stream, so use one or the other.
async fn spikes(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = find_session(&state, &id)?;
    Ok(Json(json!(s.spike_window((state.now)()))))
}

async fn latency(State(state): State<Shared>) -> Result<Json<Value>, ApiError> {
    let relay = state.relay.as_ref().ok_or_else(|| ApiError::NotFound("pose relay disabled".into()))?;
    let report = relay.report().ok_or_else(|| ApiError::NotFound("no pose frames received yet".into()))?;
    Ok(Json(json!(report)))
}

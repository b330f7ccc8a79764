//! Viewer stream over a WebSocket.
//!
//! Server to client: binary messages are pose frames exactly as on the UDP
//! wire (latest only; a slow viewer skips frames). Text messages are JSON
//! objects with a `type` of `spikes` (`{t0, t1, spikes: [[t, id], ...]}`,
//! consecutive windows tile sim time), `draw_list`, `budget`, `pick`,
//! `clock` or `error`.
//!
//! Client to server: JSON objects with a `type` of `camera`, `telemetry`,
//! `pick` or `playback`, with the same fields as the matching HTTP bodies.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::Response;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::time::MissedTickBehavior;

use crate::api::{build_draw_json, parse_body, pick_json, ApiError, CameraBody, PickBody, Shared, TelemetryBody};
use crate::session::{PlaybackRequest, Session};

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ClientMessage {
    Camera(CameraBody),
    Telemetry(TelemetryBody),
    Pick(PickBody),
    Playback(PlaybackRequest),
}

/// Clears the session's stream flag however the connection ends.
struct Attached {
    state: Shared,
    session: Arc<Session>,
}

impl Drop for Attached {
    fn drop(&mut self) {
        self.session.detach_stream((self.state.now)());
    }
}

pub async fn upgrade(ws: WebSocketUpgrade, State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.session(&id).ok_or_else(|| ApiError::NotFound(format!("no session '{id}'")))?;
    if !session.attach_stream((state.now)()) {
        return Err(ApiError::Conflict(format!("session '{id}' already has a stream")));
    }
    // If the upgrade never completes the callback is dropped, and the guard
    // with it.
    let guard = Attached { state, session };
    Ok(ws.on_upgrade(move |socket| async move {
        run(socket, &guard.state, &guard.session).await;
    }))
}

async fn send_json(socket: &mut WebSocket, kind: &str, mut v: Value) -> bool {
    if let Value::Object(map) = &mut v {
        map.insert("type".into(), Value::String(kind.into()));
    } else {
        v = json!({ "type": kind, "value": v });
    }
    socket.send(Message::Text(v.to_string().into())).await.is_ok()
}

async fn run(mut socket: WebSocket, state: &Shared, session: &Arc<Session>) {
    let mut poses = state.relay.as_ref().map(|r| r.subscribe());
    let mut spike_tick = tokio::time::interval(Duration::from_millis(state.config.spike_interval_ms));
    spike_tick.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut draw_tick = tokio::time::interval(Duration::from_millis(state.config.draw_interval_ms.max(1)));
    draw_tick.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => {
                    if let Some((kind, reply)) = handle(state, session, text.as_bytes()) {
                        if !send_json(&mut socket, kind, reply).await {
                            break;
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
            _ = spike_tick.tick() => {
                let window = session.spike_window((state.now)());
                if !send_json(&mut socket, "spikes", json!(window)).await {
                    break;
                }
            }
            _ = draw_tick.tick(), if session.draw_stale() => {
                if let Some((list, true)) = build_draw_json(state, session).await {
                    if !send_json(&mut socket, "draw_list", list).await {
                        break;
                    }
                }
            }
            changed = async {
                match poses.as_mut() {
                    Some(rx) => rx.changed().await,
                    None => std::future::pending().await,
                }
            } => {
                let Some(rx) = poses.as_mut().filter(|_| changed.is_ok()) else {
                    poses = None;
                    continue;
                };
                let frame = rx.borrow_and_update().clone();
                if let Some(bytes) = frame {
                    if socket.send(Message::Binary(bytes.as_ref().clone().into())).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
}

fn handle(state: &Shared, session: &Session, text: &[u8]) -> Option<(&'static str, Value)> {
    let now = (state.now)();
    let msg: ClientMessage = match parse_body(text) {
        Ok(m) => m,
        Err(e) => return Some(("error", error_json(e))),
    };
    match msg {
        ClientMessage::Camera(c) => match c.to_camera() {
            Ok(camera) => {
                session.set_camera(now, camera);
                None
            }
            Err(e) => Some(("error", error_json(e))),
        },
        ClientMessage::Telemetry(t) => {
            let b = session.telemetry(now, t.frame_ns.as_slice());
            Some(("budget", json!({ "primitive_budget": b.primitive_budget, "target_frame_ns": b.target_frame_ns })))
        }
        ClientMessage::Pick(p) => Some(match pick_json(state, session, &p) {
            Ok(v) => ("pick", v),
            Err(e) => ("error", error_json(e)),
        }),
        ClientMessage::Playback(p) => Some(match session.playback(now, p) {
            Ok(snap) => ("clock", json!(snap)),
            Err(m) => ("error", json!({ "message": m })),
        }),
    }
}

fn error_json(e: ApiError) -> Value {
    let m = match e {
        ApiError::NotFound(m) | ApiError::BadRequest(m) | ApiError::Conflict(m) => m,
    };
    json!({ "message": m })
}

mod common;

use axum::http::{Method, StatusCode};
use common::*;
use proptest::prelude::*;
use serde_json::{json, Value};

const CAMERA: &str = r#"{"position":[0,0,0.4],"orientation":[1,0,0,0],"vertical_fov_rad":1.2,"aspect":1.5,"near_m":0.01,"far_m":50}"#;

#[tokio::test]
async fn unknown_session_is_404() {
    let clock = ManualClock::default();
    let state = state_with(test_config(), &clock);
    for (m, uri, body) in [
        (Method::GET, "/sessions/nope", None),
        (Method::GET, "/sessions/nope/clock", None),
        (Method::POST, "/sessions/nope/playback", Some(r#"{"rate":2}"#)),
        (Method::POST, "/sessions/nope/pick", Some(r#"{"point":[0,0,0],"max_radius":1}"#)),
        (Method::POST, "/sessions/nope/telemetry", Some(r#"{"frame_ns":1}"#)),
        (Method::GET, "/sessions/nope/drawlist", None),
        (Method::DELETE, "/sessions/nope", None),
    ] {
        let (status, v) = call_json(&state, m, uri, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert!(v["error"].as_str().unwrap().contains("nope"));
    }
    let (status, _) = call_json(&state, Method::POST, "/sessions", Some(r#"{"dataset":"gamma"}"#)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bad_field_is_400_naming_the_field() {
    let clock = ManualClock::default();
    let state = state_with(test_config(), &clock);
    let id = new_session(&state, "alpha").await;
    let cases = [
        ("playback", r#"{"rate":"fast"}"#, "rate"),
        ("playback", r#"{"rate":-1}"#, "rate"),
        ("playback", r#"{"seek":-3}"#, "seek"),
        ("pick", r#"{"point":[0,0],"max_radius":1}"#, "point"),
        ("pick", r#"{"point":[0,0,0]}"#, "max_radius"),
        ("telemetry", r#"{"frame_ns":"x"}"#, "frame_ns"),
        ("camera", r#"{"position":[0,0,0],"orientation":[0,0,0,0],"vertical_fov_rad":1,"aspect":1,"near_m":0.1,"far_m":10}"#, "orientation"),
        ("camera", r#"{"position":[0,0,0],"orientation":[1,0,0,0],"vertical_fov_rad":1,"aspect":1,"near_m":0.1,"far_m":10,"zoom":2}"#, "zoom"),
    ];
    for (route, body, field) in cases {
        let (status, v) = call_json(&state, Method::POST, &format!("/sessions/{id}/{route}"), Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{route} {body}");
        let msg = v["error"].as_str().unwrap();
        assert!(msg.contains(field), "{route}: '{msg}' should mention {field}");
    }
    // A rejected request changes nothing.
    let (_, clock_v) = call_json(&state, Method::GET, &format!("/sessions/{id}/clock"), None).await;
    assert_eq!(clock_v["rate"], json!(1.0));
}

#[tokio::test]
async fn pick_hit_and_miss() {
    let clock = ManualClock::default();
    let state = state_with(test_config(), &clock);
    let id = new_session(&state, "alpha").await;
    let p = state.dataset("alpha").unwrap().dataset.positions()[17];
    let body = json!({ "point": [p[0], p[1], p[2]], "max_radius": 0.001 }).to_string();
    let (status, v) = call_json(&state, Method::POST, &format!("/sessions/{id}/pick"), Some(&body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["hit"]["id"], json!(17));
    assert!(v["hit"]["distance"].as_f64().unwrap() < 1e-9);
    assert!(v["hit"]["info"]["outgoing"].is_array());

    let (status, v) = call_json(&state, Method::POST, &format!("/sessions/{id}/pick"), Some(r#"{"point":[1e6,1e6,1e6],"max_radius":1}"#)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!({ "hit": null }));
}

#[tokio::test]
async fn paused_clock_does_not_move() {
    let clock = ManualClock::default();
    clock.set(5_000_000_000);
    let state = state_with(test_config(), &clock);
    let id = new_session(&state, "alpha").await;
    clock.advance_s(2.0);
    let (_, v) = call_json(&state, Method::POST, &format!("/sessions/{id}/playback"), Some(r#"{"rate":0}"#)).await;
    assert_eq!(v["paused"], json!(true));
    assert!((v["sim_time"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    let (_, a) = call_json(&state, Method::GET, &format!("/sessions/{id}/clock"), None).await;
    clock.advance_s(1.0);
    let (_, b) = call_json(&state, Method::GET, &format!("/sessions/{id}/clock"), None).await;
    assert_eq!(a["sim_time"], b["sim_time"]);

    // Resuming at 2x covers twice the wall time.
    call_json(&state, Method::POST, &format!("/sessions/{id}/playback"), Some(r#"{"rate":2}"#)).await;
    clock.advance_s(1.5);
    let (_, c) = call_json(&state, Method::GET, &format!("/sessions/{id}/clock"), None).await;
    assert!((c["sim_time"].as_f64().unwrap() - 5.0).abs() < 1e-9, "{c}");

    let (_, d) = call_json(&state, Method::POST, &format!("/sessions/{id}/playback"), Some(r#"{"seek":1.25}"#)).await;
    assert!((d["sim_time"].as_f64().unwrap() - 1.25).abs() < 1e-9);
}

#[tokio::test]
async fn slow_frames_shrink_the_budget() {
    let clock = ManualClock::default();
    let state = state_with(test_config(), &clock);
    let id = new_session(&state, "alpha").await;
    let (_, s) = call_json(&state, Method::GET, &format!("/sessions/{id}"), None).await;
    let start = s["budget"]["primitive_budget"].as_u64().unwrap();
    let target = s["budget"]["target_frame_ns"].as_u64().unwrap();
    let mut budgets = Vec::new();
    for _ in 0..3 {
        let body = json!({ "frame_ns": 2 * target }).to_string();
        let (status, v) = call_json(&state, Method::POST, &format!("/sessions/{id}/telemetry"), Some(&body)).await;
        assert_eq!(status, StatusCode::OK);
        budgets.push(v["primitive_budget"].as_u64().unwrap());
    }
    assert!(*budgets.last().unwrap() < start, "{budgets:?} from {start}");
    assert!(budgets.windows(2).all(|w| w[1] <= w[0]));

    // A batch is fed in order.
    let body = json!({ "frame_ns": [2 * target, 2 * target, 2 * target] }).to_string();
    let (_, v) = call_json(&state, Method::POST, &format!("/sessions/{id}/telemetry"), Some(&body)).await;
    assert!(v["primitive_budget"].as_u64().unwrap() < *budgets.last().unwrap());
    let (_, s) = call_json(&state, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(s["telemetry"].as_array().unwrap().len(), 6);
}

#[tokio::test]
async fn sessions_are_isolated() {
    let clock = ManualClock::default();
    let state = state_with(test_config(), &clock);
    let a = new_session(&state, "alpha").await;
    let b = new_session(&state, "alpha").await;
    assert_ne!(a, b);
    call_json(&state, Method::POST, &format!("/sessions/{a}/playback"), Some(r#"{"rate":0}"#)).await;
    call_json(&state, Method::POST, &format!("/sessions/{a}/telemetry"), Some(r#"{"frame_ns":[99999999,99999999,99999999]}"#)).await;
    let (status, _) = call(&state, Method::POST, &format!("/sessions/{a}/camera"), Some(CAMERA)).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    clock.advance_s(3.0);

    let (_, ca) = call_json(&state, Method::GET, &format!("/sessions/{a}/clock"), None).await;
    let (_, cb) = call_json(&state, Method::GET, &format!("/sessions/{b}/clock"), None).await;
    assert_eq!(ca["sim_time"], json!(0.0));
    assert!((cb["sim_time"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    let (_, sb) = call_json(&state, Method::GET, &format!("/sessions/{b}"), None).await;
    assert_eq!(sb["budget"]["primitive_budget"], json!(state.config.budget.primitive_budget));

    let (status, list) = call_json(&state, Method::GET, &format!("/sessions/{a}/drawlist"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(list["neurons"].as_array().unwrap().len() <= 2_000);
    let (status, _) = call_json(&state, Method::GET, &format!("/sessions/{b}/drawlist"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, _) = call(&state, Method::DELETE, &format!("/sessions/{a}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (_, ids) = call_json(&state, Method::GET, "/sessions", None).await;
    assert_eq!(ids, json!([b]));
}

#[tokio::test]
async fn idle_sessions_are_reaped_after_grace() {
    let clock = ManualClock::default();
    let state = state_with(test_config(), &clock);
    let a = new_session(&state, "alpha").await;
    let b = new_session(&state, "beta").await;
    clock.advance_s(8.0);
    call_json(&state, Method::GET, &format!("/sessions/{b}/clock"), None).await;
    clock.advance_s(2.5);
    assert_eq!(state.reap(), vec![a.clone()]);
    let (status, _) = call(&state, Method::GET, &format!("/sessions/{a}/clock"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    // A session with a stream attached is kept however long it is quiet.
    state.session(&b).unwrap().attach_stream(clock.now()());
    clock.advance_s(100.0);
    assert!(state.reap().is_empty());
}

#[tokio::test]
async fn dataset_endpoints_match_the_dataset() {
    let clock = ManualClock::default();
    let state = state_with(test_config(), &clock);
    let ds = &state.dataset("beta").unwrap().dataset;
    let (status, list) = call_json(&state, Method::GET, "/datasets", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list[1]["id"], json!("beta"));
    let (_, meta) = call_json(&state, Method::GET, "/datasets/beta/meta", None).await;
    assert_eq!(meta["neurons"], json!(ds.neuron_count()));
    assert_eq!(meta["spikes"], json!(ds.spike_count()));

    let (_, pos) = call(&state, Method::GET, "/datasets/beta/positions", None).await;
    assert_eq!(pos.len(), 12 * ds.neuron_count());
    let decoded: Vec<f32> = pos.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(decoded, ds.positions().iter().flatten().copied().collect::<Vec<_>>());

    let (_, kinds) = call(&state, Method::GET, "/datasets/beta/kinds", None).await;
    assert_eq!(kinds.len(), ds.neuron_count());
    assert!(kinds.iter().all(|k| *k <= 1));

    let (_, conns) = call(&state, Method::GET, "/datasets/beta/connections", None).await;
    assert_eq!(conns.len(), 12 * ds.connection_count());
    let pre = u32::from_le_bytes(conns[12..16].try_into().unwrap());
    let w = f32::from_le_bytes(conns[20..24].try_into().unwrap());
    assert_eq!(pre, ds.connection_pre().nth(1).unwrap());
    assert_eq!(w, ds.connection_weight()[1]);

    let (status, _) = call(&state, Method::GET, "/metrics/latency", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = call(&state, Method::GET, "/health", None).await;
    assert_eq!((status, body.as_slice()), (StatusCode::OK, b"ok".as_slice()));
}

#[tokio::test]
async fn http_spike_windows_tile() {
    let clock = ManualClock::default();
    let state = state_with(test_config(), &clock);
    let id = new_session(&state, "alpha").await;
    let ds = &state.dataset("alpha").unwrap().dataset;
    let mut expected_t0 = 0.0;
    let mut total = 0;
    for step in [0.3, 0.0, 1.7, 0.05, 4.0] {
        clock.advance_s(step);
        let (_, w) = call_json(&state, Method::GET, &format!("/sessions/{id}/spikes"), None).await;
        let (t0, t1) = (w["t0"].as_f64().unwrap(), w["t1"].as_f64().unwrap());
        assert_eq!(t0, expected_t0);
        let (times, _) = ds.spikes_in(t0, t1);
        assert_eq!(w["spikes"].as_array().unwrap().len(), times.len());
        total += times.len();
        expected_t0 = t1;
    }
    assert_eq!(total, ds.spikes_in(0.0, expected_t0).0.len());
}

fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(|v| json!(v)),
        any::<f64>().prop_filter("finite", |v| v.is_finite()).prop_map(|v| json!(v)),
        "[a-z_]{0,8}".prop_map(Value::String),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        let key = prop_oneof![
            Just("rate".to_string()),
            Just("seek".to_string()),
            Just("point".to_string()),
            Just("max_radius".to_string()),
            Just("frame_ns".to_string()),
            Just("position".to_string()),
            Just("orientation".to_string()),
            Just("dataset".to_string()),
            Just("budget".to_string()),
            "[a-z]{1,6}",
        ];
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map(key, inner, 0..4).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

fn body() -> impl Strategy<Value = String> {
    prop_oneof![
        json_value().prop_map(|v| v.to_string()),
        "\\PC{0,40}",
        Just(CAMERA.to_string()),
        Just(r#"{"frame_ns":[0,18446744073709551615]}"#.to_string()),
        Just(r#"{"point":[0,0,0],"max_radius":1e308}"#.to_string()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, ..ProptestConfig::default() })]

    #[test]
    fn garbage_bodies_get_client_errors(route in 0usize..5, valid_id in any::<bool>(), body in body()) {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async {
            let clock = ManualClock::default();
            let state = state_with(test_config(), &clock);
            let id = new_session(&state, "alpha").await;
            let sid = if valid_id { id.as_str() } else { "zz" };
            let uri = match route {
                0 => "/sessions".to_string(),
                1 => format!("/sessions/{sid}/playback"),
                2 => format!("/sessions/{sid}/pick"),
                3 => format!("/sessions/{sid}/telemetry"),
                _ => format!("/sessions/{sid}/camera"),
            };
            let (status, _) = call(&state, Method::POST, &uri, Some(&body)).await;
            let ok = [200u16, 201, 204, 400, 404, 409].contains(&status.as_u16());
            prop_assert!(ok, "{uri} {body} -> {status}");
            // The service is still healthy afterwards.
            let (status, _) = call(&state, Method::GET, &format!("/sessions/{id}/clock"), None).await;
            prop_assert_eq!(status, StatusCode::OK);
            Ok(())
        })?;
    }
}

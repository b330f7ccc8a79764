use std::time::Duration;

use holodeck_core::mocapsim::{simulate, PathKind, Recording, TrajectorySpec};
use holodeck_core::posecast::{run_loopback, LoopbackConfig, DEFAULT_BUDGET_NS};
use holodeck_core::tracking::design_constellations;

fn recording(seconds: f64) -> Recording {
    let bodies = design_constellations(3, 6, 0.1, 0.005, 11).unwrap();
    let spec = TrajectorySpec {
        duration_s: seconds,
        path: PathKind::CircularWalk {
            center: [0.0, 0.0],
            radius_m: 1.5,
            speed_mps: 1.0,
            bob_amplitude_m: 0.02,
            bob_hz: 1.8,
        },
        ..TrajectorySpec::default()
    };
    simulate(&spec, &bodies).unwrap()
}

#[test]
fn short_replay_meets_budget() {
    let rec = recording(2.0);
    let out = run_loopback(&rec, &LoopbackConfig::default()).unwrap();
    assert_eq!(out.frames_sent, rec.frames.len());
    assert!(out.observed_fraction() >= 0.99, "observed {}", out.observed_fraction());
    assert!(out.report.pass);
    assert_eq!(out.report.budget_ns, DEFAULT_BUDGET_NS);
    assert!(out.consumed_ids.windows(2).all(|w| w[0] < w[1]));
    let r = &out.report;
    for p in [&r.capture_to_encode, &r.encode_to_send, &r.send_to_receive, &r.receive_to_consume, &r.end_to_end] {
        assert!(p.p50 <= p.p90 && p.p90 <= p.p99 && p.p99 <= p.max);
    }
}

#[test]
fn slow_consumer_skips_but_never_regresses() {
    let rec = recording(1.0);
    let cfg = LoopbackConfig {
        consume_delay: Some(Duration::from_millis(15)),
        ..LoopbackConfig::default()
    };
    let out = run_loopback(&rec, &cfg).unwrap();
    assert!(out.frames_consumed < out.frames_sent);
    assert!(out.consumed_ids.windows(2).all(|w| w[0] < w[1]));
    assert!(out.consumed_ids.windows(2).any(|w| w[1] - w[0] > 1));
}

#[test]
fn injected_delay_fails_the_budget() {
    let rec = recording(1.0);
    let cfg = LoopbackConfig {
        consume_delay: Some(Duration::from_millis(25)),
        ..LoopbackConfig::default()
    };
    let out = run_loopback(&rec, &cfg).unwrap();
    assert!(!out.report.pass);
    assert!(out.report.end_to_end.p50 >= 25_000_000);
}

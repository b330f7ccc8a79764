use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::MocapError;
use crate::tracking::{CaptureVolume, Pose};

/// Capture run parameters. The default is a 10 s static recording at 180 Hz
/// with 0.1 mm marker noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySpec {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub path: PathKind,
    pub head_height_m: f64,
    pub noise_sigma_m: f64,
    /// Per marker, per frame.
    pub occlusion_prob: f64,
    pub rng_seed: u64,
    pub volume: CaptureVolume,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            sample_rate_hz: 180.0,
            path: PathKind::Static { x: 0.0, y: 0.0, yaw: 0.0 },
            head_height_m: 1.7,
            noise_sigma_m: 0.0001,
            occlusion_prob: 0.0,
            rng_seed: 0,
            volume: CaptureVolume::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathKind {
    Static {
        x: f64,
        y: f64,
        yaw: f64,
    },
    /// Constant-speed counter-clockwise circle facing the direction of travel,
    /// with a sinusoidal vertical head bob.
    CircularWalk {
        center: [f64; 2],
        radius_m: f64,
        speed_mps: f64,
        #[serde(default = "default_bob_amplitude")]
        bob_amplitude_m: f64,
        #[serde(default = "default_bob_hz")]
        bob_hz: f64,
    },
    /// Piecewise-linear position and yaw, held constant past either end.
    Scripted { waypoints: Vec<Waypoint> },
}

fn default_bob_amplitude() -> f64 {
    0.02
}

fn default_bob_hz() -> f64 {
    1.8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub position: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), MocapError> {
        let bad = |m: &str| Err(MocapError::InvalidSpec(m.to_string()));
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad("sample_rate_hz must be positive");
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return bad("occlusion_prob must lie in [0, 1]");
        }
        if !(self.noise_sigma_m >= 0.0 && self.noise_sigma_m.is_finite()) {
            return bad("noise_sigma_m must be non-negative");
        }
        match &self.path {
            PathKind::Static { .. } => {}
            PathKind::CircularWalk { radius_m, speed_mps, .. } => {
                if !(*radius_m > 0.0) || !(*speed_mps >= 0.0) {
                    return bad("circular walk needs radius > 0 and speed >= 0");
                }
            }
            PathKind::Scripted { waypoints } => {
                if waypoints.is_empty() {
                    return bad("scripted path needs at least one waypoint");
                }
                if waypoints.windows(2).any(|w| !(w[1].t > w[0].t)) {
                    return bad("waypoint times must be strictly increasing");
                }
            }
        }
        Ok(())
    }

    /// Ground-truth pose of body slot `slot` at time `t`. `phase` (radians)
    /// spreads bodies around a circular walk.
    pub fn pose_at(&self, t: f64, slot: usize, phase: f64) -> Pose {
        let lateral = 0.5 * slot as f64;
        let (position, yaw) = match &self.path {
            PathKind::Static { x, y, yaw } => (Vector3::new(x + lateral, *y, self.head_height_m), *yaw),
            PathKind::CircularWalk {
                center,
                radius_m,
                speed_mps,
                bob_amplitude_m,
                bob_hz,
            } => {
                let theta = phase + speed_mps / radius_m * t;
                let bob = bob_amplitude_m * (TAU * bob_hz * t).sin();
                (
                    Vector3::new(
                        center[0] + radius_m * theta.cos(),
                        center[1] + radius_m * theta.sin(),
                        self.head_height_m + bob,
                    ),
                    theta + FRAC_PI_2,
                )
            }
            PathKind::Scripted { waypoints } => {
                let (p, yaw) = interpolate(waypoints, t);
                (p + Vector3::new(lateral, 0.0, 0.0), yaw)
            }
        };
        Pose::new(position, UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw))
    }
}

fn interpolate(waypoints: &[Waypoint], t: f64) -> (Vector3<f64>, f64) {
    let at = |w: &Waypoint| (Vector3::from(w.position), w.yaw);
    let first = &waypoints[0];
    let last = &waypoints[waypoints.len() - 1];
    if t <= first.t {
        return at(first);
    }
    if t >= last.t {
        return at(last);
    }
    let i = waypoints.partition_point(|w| w.t <= t);
    let (a, b) = (&waypoints[i - 1], &waypoints[i]);
    let s = (t - a.t) / (b.t - a.t);
    let (pa, ya) = at(a);
    let (pb, yb) = at(b);
    (pa + (pb - pa) * s, ya + (yb - ya) * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circular_walk_faces_travel_direction() {
        let spec = TrajectorySpec {
            path: PathKind::CircularWalk {
                center: [0.0, 0.0],
                radius_m: 2.0,
                speed_mps: 1.0,
                bob_amplitude_m: 0.0,
                bob_hz: 1.8,
            },
            ..TrajectorySpec::default()
        };
        let dt = 1e-4;
        let a = spec.pose_at(1.0, 0, 0.0);
        let b = spec.pose_at(1.0 + dt, 0, 0.0);
        let velocity = (b.translation - a.translation) / dt;
        let forward = a.rotation * Vector3::x();
        assert!((velocity.normalize() - forward).norm() < 1e-3);
        assert!((velocity.norm() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn head_bob_amplitude() {
        let spec = TrajectorySpec {
            path: PathKind::CircularWalk {
                center: [0.0, 0.0],
                radius_m: 1.0,
                speed_mps: 1.0,
                bob_amplitude_m: 0.02,
                bob_hz: 2.0,
            },
            ..TrajectorySpec::default()
        };
        let zs: Vec<f64> = (0..1000).map(|i| spec.pose_at(i as f64 * 1e-3, 0, 0.0).translation.z).collect();
        let max = zs.iter().cloned().fold(f64::MIN, f64::max);
        let min = zs.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - 1.72).abs() < 1e-4 && (min - 1.68).abs() < 1e-4);
    }

    #[test]
    fn scripted_interpolates_and_clamps() {
        let spec = TrajectorySpec {
            path: PathKind::Scripted {
                waypoints: vec![
                    Waypoint { t: 0.0, position: [0.0, 0.0, 1.5], yaw: 0.0 },
                    Waypoint { t: 2.0, position: [1.0, 0.0, 1.5], yaw: 1.0 },
                ],
            },
            ..TrajectorySpec::default()
        };
        assert!((spec.pose_at(1.0, 0, 0.0).translation.x - 0.5).abs() < 1e-12);
        assert!((spec.pose_at(5.0, 0, 0.0).translation.x - 1.0).abs() < 1e-12);
        assert!((spec.pose_at(-1.0, 1, 0.0).translation.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let mut spec = TrajectorySpec::default();
        spec.occlusion_prob = 1.5;
        assert!(spec.validate().is_err());
        spec.occlusion_prob = 0.1;
        spec.sample_rate_hz = 0.0;
        assert!(spec.validate().is_err());
        spec.sample_rate_hz = 180.0;
        spec.path = PathKind::Scripted { waypoints: vec![] };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_json_uses_defaults() {
        let spec: TrajectorySpec = serde_json::from_str(
            r#"{"duration_s": 2, "path": {"kind": "circular_walk", "center": [0,0], "radius_m": 1.5, "speed_mps": 1.0}}"#,
        )
        .unwrap();
        assert_eq!(spec.sample_rate_hz, 180.0);
        assert_eq!(spec.noise_sigma_m, 0.0001);
        assert!(matches!(spec.path, PathKind::CircularWalk { bob_amplitude_m, .. } if bob_amplitude_m == 0.02));
    }
}

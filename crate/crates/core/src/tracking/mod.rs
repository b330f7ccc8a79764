//! Rigid-body tracking of marker-equipped bodies from unlabeled 3D marker clouds.
//!
//! A frame is solved in two passes. Bodies tracked in the previous frame are
//! first gated: each predicted marker grabs the nearest unclaimed cloud point
//! within the gate radius. Whatever is left goes through a distance-signature
//! search that labels markers without any temporal prior.

mod constellation;
mod matching;
mod solve;
mod track;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use constellation::{design_constellations, load_constellations, Constellation, ConstellationFile};
pub use matching::{best_assignment, match_bodies, BodyMatch, MatchOutcome};
pub use solve::{solve_rigid, solve_rigid_with, Correspondence};
pub use track::{track_frame, track_frame_instrumented, TrackStats};

pub type BodyId = u16;

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("at least 3 correspondences are required, got {0}")]
    InsufficientMarkers(usize),
    #[error("corresponded markers are collinear")]
    DegenerateConfiguration,
    #[error("bodies {first} and {second} fit the same marker subset")]
    AmbiguousMatch { first: BodyId, second: BodyId },
    #[error("correspondence refers to missing point (local {local}, observed {observed})")]
    BadCorrespondence { local: usize, observed: usize },
    #[error("constellation {body_id}: {reason}")]
    InvalidConstellation { body_id: BodyId, reason: String },
    #[error("marker cloud invalid: {0}")]
    InvalidCloud(String),
    #[error("constellation file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tunables for matching and gating, all in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Minimum separation between any two pairwise marker distances.
    pub signature_separation: f64,
    /// Allowed deviation of an observed distance from the template distance.
    pub match_tolerance: f64,
    pub gate_radius: f64,
    /// Relative singular-value threshold below which markers count as collinear.
    pub collinear_eps: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            signature_separation: 0.005,
            match_tolerance: 0.002,
            gate_radius: 0.030,
            collinear_eps: 1e-9,
        }
    }
}

/// Rigid transform taking body-frame points into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self { translation, rotation }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Quaternion components in (w, x, y, z) order.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Angle of the relative rotation between two poses, accurate near zero.
    pub fn rotation_error(&self, other: &Pose) -> f64 {
        let rel = self.rotation.inverse() * other.rotation;
        let q = rel.quaternion();
        2.0 * q.imag().norm().atan2(q.w.abs())
    }

    pub fn translation_error(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Axis-aligned capture volume in world meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureVolume {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for CaptureVolume {
    /// 6 m x 6 m floor, 3 m high, centered on the origin with z up.
    fn default() -> Self {
        Self {
            min: [-3.0, -3.0, 0.0],
            max: [3.0, 3.0, 3.0],
        }
    }
}

impl CaptureVolume {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// One frame of unlabeled marker observations.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerCloud {
    pub frame_id: u64,
    pub timestamp_ns: u64,
    pub points: Vec<Vector3<f64>>,
}

impl MarkerCloud {
    pub fn new(frame_id: u64, timestamp_ns: u64, points: Vec<Vector3<f64>>) -> Self {
        Self {
            frame_id,
            timestamp_ns,
            points,
        }
    }

    pub fn validate(&self, volume: &CaptureVolume) -> Result<(), TrackingError> {
        for (i, p) in self.points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(TrackingError::InvalidCloud(format!("point {i} is not finite")));
            }
            if !volume.contains(p) {
                return Err(TrackingError::InvalidCloud(format!(
                    "point {i} at ({:.3}, {:.3}, {:.3}) is outside the capture volume",
                    p.x, p.y, p.z
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tracked,
    /// Pose is the last known one and is stale.
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackResult {
    pub body_id: BodyId,
    pub pose: Pose,
    /// NaN when the body is lost.
    pub residual_rms: f64,
    pub markers_used: usize,
    pub status: TrackStatus,
}

impl TrackResult {
    pub fn is_tracked(&self) -> bool {
        self.status == TrackStatus::Tracked
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Unit;

    #[test]
    fn rotation_error_is_small_angle_accurate() {
        let a = Pose::identity();
        let b = Pose::new(
            Vector3::zeros(),
            UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, 2.0, 3.0)), 3e-11),
        );
        let err = a.rotation_error(&b);
        assert!((err - 3e-11).abs() < 1e-20, "{err}");
    }

    #[test]
    fn capture_volume_bounds_are_closed() {
        let v = CaptureVolume::default();
        assert!(v.contains(&Vector3::new(3.0, -3.0, 0.0)));
        assert!(!v.contains(&Vector3::new(3.0001, 0.0, 1.0)));
    }

    #[test]
    fn cloud_validation_rejects_nan() {
        let cloud = MarkerCloud::new(0, 0, vec![Vector3::new(f64::NAN, 0.0, 1.0)]);
        assert!(matches!(
            cloud.validate(&CaptureVolume::default()),
            Err(TrackingError::InvalidCloud(_))
        ));
    }
}

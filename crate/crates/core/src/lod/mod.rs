//! Per-frame draw lists for a network under a frame-time budget.

mod controller;
mod draw;
mod frustum;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tracking::Pose;

pub use controller::{BudgetController, ControllerConfig, CostCalibrator};
pub use draw::{build_draw_list, DrawList, DrawListBuilder, LEVELS};
pub use frustum::{frustum_cull, Frustum};

pub const TARGET_FRAME_NS: u64 = 16_666_667;

#[derive(Debug, Error, PartialEq)]
pub enum LodError {
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("invalid placement: {0}")]
    InvalidPlacement(&'static str),
}

/// Viewer camera in world meters. Looks down its local -z axis with +y up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraState {
    pub pose: Pose,
    pub vertical_fov_rad: f64,
    pub aspect: f64,
    pub near_m: f64,
    pub far_m: f64,
}

impl CameraState {
    pub fn validate(&self) -> Result<(), LodError> {
        let t = self.pose.translation;
        if !(t.x.is_finite() && t.y.is_finite() && t.z.is_finite()) {
            return Err(LodError::InvalidCamera("position must be finite"));
        }
        if !self.pose.rotation.coords.iter().all(|v| v.is_finite()) {
            return Err(LodError::InvalidCamera("orientation must be finite"));
        }
        if !(self.vertical_fov_rad > 0.0 && self.vertical_fov_rad < std::f64::consts::PI) {
            return Err(LodError::InvalidCamera("fov must lie in (0, pi)"));
        }
        if !(self.aspect > 0.0 && self.aspect.is_finite()) {
            return Err(LodError::InvalidCamera("aspect must be positive"));
        }
        if !(self.near_m > 0.0 && self.near_m < self.far_m && self.far_m.is_finite()) {
            return Err(LodError::InvalidCamera("need 0 < near < far"));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`, with world +z as up unless the
    /// view is vertical.
    pub fn look_at(eye: [f64; 3], target: [f64; 3], vertical_fov_rad: f64, aspect: f64, near_m: f64, far_m: f64) -> Self {
        let eye = Vector3::from(eye);
        let dir = Vector3::from(target) - eye;
        let up = if dir.normalize().z.abs() > 0.999 { Vector3::y() } else { Vector3::z() };
        // face_towards maps local +z onto dir; the camera looks down -z.
        let rotation = UnitQuaternion::face_towards(&-dir, &up);
        Self {
            pose: Pose::new(eye, rotation),
            vertical_fov_rad,
            aspect,
            near_m,
            far_m,
        }
    }
}

/// Where the dataset sits in the world: `world = origin + meters_per_unit * p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub origin_m: [f64; 3],
    pub meters_per_unit: f64,
}

impl Default for Placement {
    fn default() -> Self {
        Self {
            origin_m: [0.0; 3],
            meters_per_unit: 0.001,
        }
    }
}

impl Placement {
    pub fn validate(&self) -> Result<(), LodError> {
        if !(self.meters_per_unit > 0.0 && self.meters_per_unit.is_finite()) {
            return Err(LodError::InvalidPlacement("scale must be positive"));
        }
        if !self.origin_m.iter().all(|v| v.is_finite()) {
            return Err(LodError::InvalidPlacement("origin must be finite"));
        }
        Ok(())
    }
}

/// Frame budget and the linear cost model used to estimate frame time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameBudget {
    pub target_frame_ns: u64,
    /// Maximum number of points plus lines.
    pub primitive_budget: u64,
    pub ns_per_point: f64,
    pub ns_per_line: f64,
}

impl Default for FrameBudget {
    fn default() -> Self {
        Self {
            target_frame_ns: TARGET_FRAME_NS,
            primitive_budget: 250_000,
            ns_per_point: 10.0,
            ns_per_line: 25.0,
        }
    }
}

impl FrameBudget {
    pub fn estimate_ns(&self, points: u64, lines: u64) -> f64 {
        points as f64 * self.ns_per_point + lines as f64 * self.ns_per_line
    }
}

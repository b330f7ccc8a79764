use nalgebra::Vector3;

use super::{CameraState, LodError, Placement};
use crate::neurocube::{Extent, NetworkDataset, SpatialIndex};

/// Closed view frustum in dataset coordinates, as six planes `n·p + k >= 0`
/// plus the view axis used for depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum {
    planes: [([f64; 3], f64); 6],
    forward: [f64; 3],
    eye: [f64; 3],
    near: f64,
    far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Inside,
    Outside,
    Straddles,
}

impl Frustum {
    pub fn new(camera: &CameraState, placement: &Placement) -> Result<Self, LodError> {
        camera.validate()?;
        placement.validate()?;
        let s = placement.meters_per_unit;
        let eye = (camera.pose.translation - Vector3::from(placement.origin_m)) / s;
        let r = camera.pose.rotation;
        let right = r * Vector3::x();
        let up = r * Vector3::y();
        let fwd = -(r * Vector3::z());
        let near = camera.near_m / s;
        let far = camera.far_m / s;
        let ty = (camera.vertical_fov_rad / 2.0).tan();
        let tx = ty * camera.aspect;
        let plane = |n: Vector3<f64>, c: f64| ([n.x, n.y, n.z], c - n.dot(&eye));
        Ok(Self {
            planes: [
                plane(fwd, -near),
                plane(-fwd, far),
                plane(fwd * tx - right, 0.0),
                plane(fwd * tx + right, 0.0),
                plane(fwd * ty - up, 0.0),
                plane(fwd * ty + up, 0.0),
            ],
            forward: [fwd.x, fwd.y, fwd.z],
            eye: [eye.x, eye.y, eye.z],
            near,
            far,
        })
    }

    /// Closed test: points on a plane count as inside.
    #[inline]
    pub fn contains(&self, p: [f32; 3]) -> bool {
        let p = p.map(f64::from);
        self.planes
            .iter()
            .all(|(n, k)| n[0] * p[0] + n[1] * p[1] + n[2] * p[2] + k >= 0.0)
    }

    /// Distance along the view axis, dataset units.
    #[inline]
    pub fn depth(&self, p: [f32; 3]) -> f64 {
        let f = &self.forward;
        f[0] * (p[0] as f64 - self.eye[0]) + f[1] * (p[1] as f64 - self.eye[1]) + f[2] * (p[2] as f64 - self.eye[2])
    }

    /// Lower bound of depth over a box, slightly conservative.
    pub(crate) fn min_depth(&self, b: &Extent) -> f64 {
        let f = &self.forward;
        let c = [0, 1, 2].map(|k| 0.5 * (b.min[k] + b.max[k]) - self.eye[k]);
        let h = [0, 1, 2].map(|k| 0.5 * (b.max[k] - b.min[k]));
        let center = f[0] * c[0] + f[1] * c[1] + f[2] * c[2];
        let reach = f[0].abs() * h[0] + f[1].abs() * h[1] + f[2].abs() * h[2];
        let d = center - reach;
        d - 1e-9 * d.abs().max(1.0)
    }

    pub fn near(&self) -> f64 {
        self.near
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    /// Conservative box classification; `Inside` and `Outside` hold with a
    /// margin, anything near a plane is `Straddles`.
    pub(crate) fn classify(&self, b: &Extent) -> Side {
        let c = [0, 1, 2].map(|k| 0.5 * (b.min[k] + b.max[k]));
        let h = [0, 1, 2].map(|k| 0.5 * (b.max[k] - b.min[k]));
        let scale = c.iter().chain(&h).chain(&self.eye).fold(1.0f64, |m, v| m.max(v.abs()));
        let margin = 1e-9 * scale;
        let mut inside = true;
        for (n, k) in &self.planes {
            let center = n[0] * c[0] + n[1] * c[1] + n[2] * c[2] + k;
            let reach = n[0].abs() * h[0] + n[1].abs() * h[1] + n[2].abs() * h[2];
            if center + reach < -margin {
                return Side::Outside;
            }
            if center - reach < margin {
                inside = false;
            }
        }
        if inside {
            Side::Inside
        } else {
            Side::Straddles
        }
    }
}

/// Ids of neurons inside the frustum, ascending. An invalid camera culls everything.
pub fn frustum_cull(
    dataset: &NetworkDataset,
    index: &SpatialIndex,
    camera: &CameraState,
    placement: &Placement,
) -> Vec<u32> {
    let Ok(f) = Frustum::new(camera, placement) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(dataset.neuron_count().min(1 << 16));
    super::draw::visit_visible(index, &f, |id, _| out.push(id));
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neurocube::NeuronKind;
    use crate::tracking::Pose;

    fn camera() -> CameraState {
        CameraState {
            pose: Pose::identity(),
            vertical_fov_rad: 1.0,
            aspect: 1.5,
            near_m: 0.1,
            far_m: 10.0,
        }
    }

    fn unit() -> Placement {
        Placement {
            origin_m: [0.0; 3],
            meters_per_unit: 1.0,
        }
    }

    fn dataset(points: Vec<[f32; 3]>) -> NetworkDataset {
        let n = points.len();
        NetworkDataset::from_parts("t", "m", points, vec![NeuronKind::Regular; n], vec![], vec![]).unwrap()
    }

    #[test]
    fn everything_behind_is_culled() {
        let d = dataset((0..100).map(|i| [i as f32 * 0.01, 0.0, 1.0 + i as f32 * 0.05]).collect());
        let idx = SpatialIndex::build(&d);
        assert!(frustum_cull(&d, &idx, &camera(), &unit()).is_empty());
    }

    #[test]
    fn near_and_far_planes_are_closed() {
        let d = dataset(vec![[0.0, 0.0, -0.125], [0.0, 0.0, -10.0], [0.0, 0.0, -10.5], [0.0, 0.0, -0.0625]]);
        let cam = CameraState {
            near_m: 0.125,
            ..camera()
        };
        let idx = SpatialIndex::build(&d);
        assert_eq!(frustum_cull(&d, &idx, &cam, &unit()), vec![0, 1]);
    }

    #[test]
    fn invalid_camera_culls_all() {
        let d = dataset(vec![[0.0, 0.0, -1.0]]);
        let idx = SpatialIndex::build(&d);
        let cam = CameraState {
            near_m: 5.0,
            far_m: 1.0,
            ..camera()
        };
        assert!(frustum_cull(&d, &idx, &cam, &unit()).is_empty());
    }

    #[test]
    fn look_at_points_forward() {
        let cam = CameraState::look_at([0.0, -5.0, 0.0], [0.0, 0.0, 0.0], 1.0, 1.0, 0.1, 100.0);
        let f = Frustum::new(&cam, &unit()).unwrap();
        assert!(f.contains([0.0, 0.0, 0.0]));
        assert!((f.depth([0.0, 0.0, 0.0]) - 5.0).abs() < 1e-12);
        assert!(!f.contains([0.0, -6.0, 0.0]));
    }
}

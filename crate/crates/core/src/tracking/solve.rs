use nalgebra::{DMatrix, Matrix3, Matrix3xX, Rotation3, UnitQuaternion, Vector3, SVD};

use super::{Pose, TrackingError};

/// Pairs a body-frame marker index with an observed point index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Correspondence {
    pub local: usize,
    pub observed: usize,
}

impl From<(usize, usize)> for Correspondence {
    fn from((local, observed): (usize, usize)) -> Self {
        Self { local, observed }
    }
}

/// Least-squares rigid transform mapping `local` markers onto `observed` points.
///
/// Returns the pose and the RMS residual in meters.
pub fn solve_rigid(
    local: &[Vector3<f64>],
    observed: &[Vector3<f64>],
    correspondences: &[Correspondence],
) -> Result<(Pose, f64), TrackingError> {
    solve_rigid_with(local, observed, correspondences, 1e-9)
}

pub fn solve_rigid_with(
    local: &[Vector3<f64>],
    observed: &[Vector3<f64>],
    correspondences: &[Correspondence],
    collinear_eps: f64,
) -> Result<(Pose, f64), TrackingError> {
    let n = correspondences.len();
    if n < 3 {
        return Err(TrackingError::InsufficientMarkers(n));
    }
    let mut src = Vec::with_capacity(n);
    let mut dst = Vec::with_capacity(n);
    for c in correspondences {
        match (local.get(c.local), observed.get(c.observed)) {
            (Some(p), Some(q)) => {
                src.push(*p);
                dst.push(*q);
            }
            _ => {
                return Err(TrackingError::BadCorrespondence {
                    local: c.local,
                    observed: c.observed,
                })
            }
        }
    }

    let inv_n = 1.0 / n as f64;
    let src_centroid = src.iter().sum::<Vector3<f64>>() * inv_n;
    let dst_centroid = dst.iter().sum::<Vector3<f64>>() * inv_n;
    let src_centered: Vec<_> = src.iter().map(|p| p - src_centroid).collect();
    let dst_centered: Vec<_> = dst.iter().map(|q| q - dst_centroid).collect();

    // Collinear markers have rank <= 1: the second singular value vanishes.
    let mut spread = Matrix3xX::from_columns(&src_centered).singular_values().as_slice().to_vec();
    spread.sort_by(|a, b| b.total_cmp(a));
    if !(spread[0] > 0.0) || spread[1] < collinear_eps * spread[0] {
        return Err(TrackingError::DegenerateConfiguration);
    }

    let mut covariance = Matrix3::zeros();
    for (p, q) in src_centered.iter().zip(&dst_centered) {
        covariance += p * q.transpose();
    }
    let rotation = procrustes_rotation(covariance);

    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rotation));
    let translation = dst_centroid - rotation * src_centroid;
    let pose = Pose::new(translation, rotation);

    let sq: f64 = src
        .iter()
        .zip(&dst)
        .map(|(p, q)| (pose.transform_point(p) - q).norm_squared())
        .sum();
    Ok((pose, (sq * inv_n).sqrt()))
}

/// Proper rotation R maximizing trace(R H) for H = sum p q^T, i.e. R = V D U^T.
///
/// Goes through the dynamic SVD: nalgebra's 3x3 fast path works on H^T H,
/// which squares the condition number and costs ~1e-7 rad on thin triangles.
fn procrustes_rotation(covariance: Matrix3<f64>) -> Matrix3<f64> {
    let svd = SVD::new(DMatrix::from_column_slice(3, 3, covariance.as_slice()), true, true);
    let u: Matrix3<f64> = svd.u.expect("u requested").fixed_view::<3, 3>(0, 0).into_owned();
    let v: Matrix3<f64> = svd.v_t.expect("v_t requested").transpose().fixed_view::<3, 3>(0, 0).into_owned();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        // Flip the axis belonging to the smallest singular value.
        let smallest = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(2);
        d[(smallest, smallest)] = -1.0;
    }
    v * d * u.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Unit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn asymmetric() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.11, 0.0, 0.01),
            Vector3::new(0.02, 0.07, 0.0),
            Vector3::new(-0.03, 0.01, 0.05),
        ]
    }

    fn identity_pairs(n: usize) -> Vec<Correspondence> {
        (0..n).map(|i| Correspondence { local: i, observed: i }).collect()
    }

    #[test]
    fn identity_case() {
        let pts = asymmetric();
        let (pose, rms) = solve_rigid(&pts, &pts, &identity_pairs(4)).unwrap();
        assert!(pose.rotation_error(&Pose::identity()) < 1e-12);
        assert!(pose.translation.norm() < 1e-12);
        assert!(rms < 1e-12);
    }

    #[test]
    fn recovers_quarter_turn_about_z() {
        let pts = asymmetric();
        let applied = Pose::new(
            Vector3::new(1.0, 2.0, 3.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2),
        );
        let obs: Vec<_> = pts.iter().map(|p| applied.transform_point(p)).collect();
        let (pose, rms) = solve_rigid(&pts, &obs, &identity_pairs(4)).unwrap();
        assert!(pose.rotation_error(&applied) < 1e-9);
        assert!(pose.translation_error(&applied) < 1e-9);
        assert!(rms < 1e-9);
    }

    #[test]
    fn never_returns_reflection() {
        // Observed set is a mirror image: best proper rotation, not the reflection.
        let pts = asymmetric();
        let mirrored: Vec<_> = pts.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
        let (pose, _) = solve_rigid(&pts, &mirrored, &identity_pairs(4)).unwrap();
        let r = pose.rotation_matrix();
        assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_too_few() {
        let pts = asymmetric();
        assert!(matches!(
            solve_rigid(&pts, &pts, &identity_pairs(2)),
            Err(TrackingError::InsufficientMarkers(2))
        ));
    }

    #[test]
    fn rejects_collinear() {
        let pts: Vec<_> = (0..4).map(|i| Vector3::new(0.05 * i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            solve_rigid(&pts, &pts, &identity_pairs(4)),
            Err(TrackingError::DegenerateConfiguration)
        ));
    }

    #[test]
    fn three_points_are_enough() {
        let pts = asymmetric();
        let applied = Pose::new(
            Vector3::new(-0.4, 1.0, 1.7),
            UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, -1.0, 0.5)), 2.0),
        );
        let obs: Vec<_> = pts.iter().map(|p| applied.transform_point(p)).collect();
        let (pose, _) = solve_rigid(&pts, &obs, &identity_pairs(3)).unwrap();
        assert!(pose.rotation_error(&applied) < 1e-9);
    }

    #[test]
    fn noisy_residual_within_three_sigma() {
        let sigma = 1e-4;
        let pts = asymmetric();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, sigma).unwrap();
        for _ in 0..1000 {
            let applied = Pose::new(
                Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.5..2.5)),
                UnitQuaternion::from_euler_angles(rng.gen(), rng.gen(), rng.gen()),
            );
            let obs: Vec<_> = pts
                .iter()
                .map(|p| {
                    applied.transform_point(p)
                        + Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
                })
                .collect();
            let (_, rms) = solve_rigid(&pts, &obs, &identity_pairs(4)).unwrap();
            assert!(rms <= 3.0 * sigma, "rms {rms}");
        }
    }
}

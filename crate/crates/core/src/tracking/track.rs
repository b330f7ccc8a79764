use nalgebra::Vector3;

use super::{
    match_bodies,
    solve::{solve_rigid_with, Correspondence},
    Constellation, MarkerCloud, Pose, TrackResult, TrackStatus, TrackerConfig,
};

/// Which path produced each body's result in one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrackStats {
    /// Bodies solved from gated points near their predicted markers.
    pub gated: usize,
    /// Bodies that went through the signature search.
    pub signature_searched: usize,
    pub lost: usize,
}

/// Solves every constellation in `cloud`. Results come back in body-id order,
/// one per constellation.
pub fn track_frame(
    cloud: &MarkerCloud,
    constellations: &[Constellation],
    previous: Option<&[TrackResult]>,
    cfg: &TrackerConfig,
) -> Vec<TrackResult> {
    track_frame_instrumented(cloud, constellations, previous, cfg).0
}

pub fn track_frame_instrumented(
    cloud: &MarkerCloud,
    constellations: &[Constellation],
    previous: Option<&[TrackResult]>,
    cfg: &TrackerConfig,
) -> (Vec<TrackResult>, TrackStats) {
    let mut order: Vec<&Constellation> = constellations.iter().collect();
    order.sort_by_key(|c| c.body_id());
    let prior = |c: &Constellation| previous.and_then(|p| p.iter().find(|r| r.body_id == c.body_id()));

    let mut stats = TrackStats::default();
    let mut available = vec![true; cloud.points.len()];
    let mut results: Vec<Option<TrackResult>> = vec![None; order.len()];

    for (slot, c) in order.iter().enumerate() {
        let Some(prev) = prior(c).filter(|r| r.is_tracked()) else {
            continue;
        };
        if let Some(r) = gate(c, &prev.pose, &cloud.points, &mut available, cfg) {
            stats.gated += 1;
            results[slot] = Some(r);
        }
    }

    let remaining: Vec<usize> = (0..order.len()).filter(|&s| results[s].is_none()).collect();
    if !remaining.is_empty() {
        stats.signature_searched += remaining.len();
        let index_map: Vec<usize> = (0..cloud.points.len()).filter(|&p| available[p]).collect();
        let sub = MarkerCloud::new(
            cloud.frame_id,
            cloud.timestamp_ns,
            index_map.iter().map(|&p| cloud.points[p]).collect(),
        );
        let subset: Vec<Constellation> = remaining.iter().map(|&s| order[s].clone()).collect();
        // An ambiguous search leaves every remaining body lost.
        if let Ok(outcome) = match_bodies(&sub, &subset, cfg) {
            for m in outcome.matched {
                let slot = remaining
                    .iter()
                    .copied()
                    .find(|&s| order[s].body_id() == m.body_id)
                    .expect("matched body was searched");
                results[slot] = Some(TrackResult {
                    body_id: m.body_id,
                    pose: m.pose,
                    residual_rms: m.residual_rms,
                    markers_used: m.pairs.len(),
                    status: TrackStatus::Tracked,
                });
            }
        }
    }

    let out = order
        .iter()
        .zip(results)
        .map(|(c, r)| {
            r.unwrap_or_else(|| {
                stats.lost += 1;
                TrackResult {
                    body_id: c.body_id(),
                    pose: prior(c).map(|p| p.pose).unwrap_or_else(Pose::identity),
                    residual_rms: f64::NAN,
                    markers_used: 0,
                    status: TrackStatus::Lost,
                }
            })
        })
        .collect();
    (out, stats)
}

/// Claims, for each predicted marker in order, the nearest available point
/// within the gate radius. Claims are released if the fit fails.
fn gate(
    c: &Constellation,
    prev: &Pose,
    points: &[Vector3<f64>],
    available: &mut [bool],
    cfg: &TrackerConfig,
) -> Option<TrackResult> {
    let gate_sq = cfg.gate_radius * cfg.gate_radius;
    let mut pairs = Vec::new();
    for (local, marker) in c.local_points().iter().enumerate() {
        let predicted = prev.transform_point(marker);
        let nearest = points
            .iter()
            .enumerate()
            .filter(|(p, _)| available[*p])
            .map(|(p, q)| (p, (q - predicted).norm_squared()))
            .filter(|(_, d)| *d <= gate_sq)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((observed, _)) = nearest {
            available[observed] = false;
            pairs.push(Correspondence { local, observed });
        }
    }
    let fit = solve_rigid_with(c.local_points(), points, &pairs, cfg.collinear_eps)
        .ok()
        .filter(|(_, rms)| *rms <= cfg.match_tolerance);
    match fit {
        Some((pose, residual_rms)) => Some(TrackResult {
            body_id: c.body_id(),
            pose,
            residual_rms,
            markers_used: pairs.len(),
            status: TrackStatus::Tracked,
        }),
        None => {
            for p in &pairs {
                available[p.observed] = true;
            }
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracking::design_constellations;
    use nalgebra::UnitQuaternion;

    fn frame(c: &Constellation, pose: &Pose, id: u64) -> MarkerCloud {
        MarkerCloud::new(
            id,
            id * 5_555_556,
            c.local_points().iter().map(|p| pose.transform_point(p)).collect(),
        )
    }

    fn start() -> Pose {
        Pose::new(Vector3::new(0.2, 0.4, 1.7), UnitQuaternion::from_euler_angles(0.05, 0.0, 0.7))
    }

    #[test]
    fn static_body_identical_poses() {
        let set = design_constellations(1, 6, 0.09, 0.005, 5).unwrap();
        let cfg = TrackerConfig::default();
        let f = frame(&set[0], &start(), 0);
        let r1 = track_frame(&f, &set, None, &cfg);
        let r2 = track_frame(&f, &set, Some(&r1), &cfg);
        assert_eq!(r1[0].status, TrackStatus::Tracked);
        assert_eq!(r1[0].pose, r2[0].pose);
    }

    #[test]
    fn five_mm_step_goes_through_gating() {
        let set = design_constellations(1, 6, 0.09, 0.005, 6).unwrap();
        let cfg = TrackerConfig::default();
        let p0 = start();
        let p1 = Pose::new(p0.translation + Vector3::new(0.005, 0.0, 0.0), p0.rotation);
        let (r0, s0) = track_frame_instrumented(&frame(&set[0], &p0, 0), &set, None, &cfg);
        assert_eq!((s0.gated, s0.signature_searched), (0, 1));
        let (r1, s1) = track_frame_instrumented(&frame(&set[0], &p1, 1), &set, Some(&r0), &cfg);
        assert_eq!((s1.gated, s1.signature_searched), (1, 0));
        assert!(r1[0].pose.translation_error(&p1) < 1e-9);
    }

    #[test]
    fn all_markers_gone_holds_last_pose() {
        let set = design_constellations(1, 6, 0.09, 0.005, 7).unwrap();
        let cfg = TrackerConfig::default();
        let r0 = track_frame(&frame(&set[0], &start(), 0), &set, None, &cfg);
        let empty = MarkerCloud::new(1, 5_555_556, vec![]);
        let r1 = track_frame(&empty, &set, Some(&r0), &cfg);
        assert_eq!(r1[0].status, TrackStatus::Lost);
        assert_eq!(r1[0].pose, r0[0].pose);
    }

    #[test]
    fn one_result_per_body_in_id_order() {
        let mut set = design_constellations(3, 6, 0.09, 0.005, 8).unwrap();
        set.reverse();
        let cloud = frame(&set[1], &start(), 0);
        let out = track_frame(&cloud, &set, None, &TrackerConfig::default());
        let ids: Vec<_> = out.iter().map(|r| r.body_id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert_eq!(out[1].status, TrackStatus::Tracked);
        assert_eq!(out[0].status, TrackStatus::Lost);
    }

    #[test]
    fn large_jump_falls_back_to_signature_search() {
        let set = design_constellations(1, 6, 0.09, 0.005, 9).unwrap();
        let cfg = TrackerConfig::default();
        let p0 = start();
        let p1 = Pose::new(p0.translation + Vector3::new(0.5, 0.0, 0.0), p0.rotation);
        let r0 = track_frame(&frame(&set[0], &p0, 0), &set, None, &cfg);
        let (r1, s1) = track_frame_instrumented(&frame(&set[0], &p1, 1), &set, Some(&r0), &cfg);
        assert_eq!((s1.gated, s1.signature_searched), (0, 1));
        assert!(r1[0].pose.translation_error(&p1) < 1e-9);
    }
}

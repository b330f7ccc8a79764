use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{solve::Correspondence, solve_rigid_with, BodyId, TrackingError};

/// Rigid marker template of one tracked body.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    body_id: BodyId,
    name: String,
    local_points: Vec<Vector3<f64>>,
    distances: Vec<Vec<f64>>,
    signature: Vec<f64>,
}

impl Constellation {
    /// Validates the template: at least three markers, not collinear, and every
    /// pairwise distance separated from every other by more than `separation`.
    pub fn new(
        body_id: BodyId,
        name: impl Into<String>,
        local_points: Vec<Vector3<f64>>,
        separation: f64,
    ) -> Result<Self, TrackingError> {
        let invalid = |reason: String| TrackingError::InvalidConstellation { body_id, reason };
        if local_points.len() < 3 {
            return Err(invalid(format!("{} markers, need at least 3", local_points.len())));
        }
        if local_points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(invalid("non-finite marker coordinate".into()));
        }
        let pairs: Vec<_> = (0..local_points.len())
            .map(|i| Correspondence { local: i, observed: i })
            .collect();
        if let Err(TrackingError::DegenerateConfiguration) =
            solve_rigid_with(&local_points, &local_points, &pairs, 1e-9)
        {
            return Err(invalid("markers are collinear".into()));
        }
        let c = Self::build(body_id, name.into(), local_points);
        if let Some(w) = c.signature.windows(2).find(|w| w[1] - w[0] <= separation) {
            return Err(invalid(format!(
                "pairwise distances {:.4} and {:.4} closer than {separation}",
                w[0], w[1]
            )));
        }
        Ok(c)
    }

    pub(crate) fn build(body_id: BodyId, name: String, local_points: Vec<Vector3<f64>>) -> Self {
        let n = local_points.len();
        let mut distances = vec![vec![0.0; n]; n];
        let mut signature = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (local_points[i] - local_points[j]).norm();
                distances[i][j] = d;
                distances[j][i] = d;
                signature.push(d);
            }
        }
        signature.sort_by(f64::total_cmp);
        Self {
            body_id,
            name,
            local_points,
            distances,
            signature,
        }
    }

    pub fn body_id(&self) -> BodyId {
        self.body_id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn local_points(&self) -> &[Vector3<f64>] {
        &self.local_points
    }

    pub fn len(&self) -> usize {
        self.local_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_points.is_empty()
    }

    /// Sorted pairwise marker distances.
    pub fn signature(&self) -> &[f64] {
        &self.signature
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i][j]
    }
}

/// On-disk constellation document, units meters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstellationFile {
    pub bodies: Vec<BodyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyEntry {
    pub id: BodyId,
    pub name: String,
    pub markers: Vec<[f64; 3]>,
}

impl ConstellationFile {
    pub fn from_constellations(constellations: &[Constellation]) -> Self {
        Self {
            bodies: constellations
                .iter()
                .map(|c| BodyEntry {
                    id: c.body_id,
                    name: c.name.clone(),
                    markers: c.local_points.iter().map(|p| [p.x, p.y, p.z]).collect(),
                })
                .collect(),
        }
    }

    pub fn into_constellations(self, separation: f64) -> Result<Vec<Constellation>, TrackingError> {
        let mut out: Vec<Constellation> = Vec::with_capacity(self.bodies.len());
        for b in self.bodies {
            if out.iter().any(|c| c.body_id == b.id) {
                return Err(TrackingError::InvalidConstellation {
                    body_id: b.id,
                    reason: "duplicate body id".into(),
                });
            }
            let pts = b.markers.iter().map(|m| Vector3::new(m[0], m[1], m[2])).collect();
            out.push(Constellation::new(b.id, b.name, pts, separation)?);
        }
        out.sort_by_key(|c| c.body_id);
        Ok(out)
    }
}

pub fn load_constellations(path: &Path, separation: f64) -> Result<Vec<Constellation>, TrackingError> {
    let text = std::fs::read_to_string(path)?;
    let file: ConstellationFile = serde_json::from_str(&text)?;
    file.into_constellations(separation)
}

/// Lays out `count` bodies of `markers` markers each inside a sphere of
/// `radius` meters. Within a body every pairwise distance differs from every
/// other by more than `separation`; across bodies no marker triangle matches
/// another body's triangle within `separation`, so any three visible markers
/// identify their body.
///
/// Markers are placed greedily; a candidate position is redrawn when it would
/// break either rule.
pub fn design_constellations(
    count: usize,
    markers: usize,
    radius: f64,
    separation: f64,
    seed: u64,
) -> Result<Vec<Constellation>, TrackingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut foreign: Vec<[f64; 3]> = Vec::new();
    let mut out: Vec<Constellation> = Vec::with_capacity(count);
    let min_spacing = (2.0 * separation).max(0.02);
    for body in 0..count {
        let body_id = body as BodyId;
        let mut pts: Vec<Vector3<f64>> = Vec::with_capacity(markers);
        let mut used: Vec<f64> = Vec::new();
        let mut attempts = 0usize;
        while pts.len() < markers {
            attempts += 1;
            if attempts % 5_000 == 0 {
                // Early markers boxed the layout in; start this body over.
                pts.clear();
                used.clear();
            }
            if attempts > 500_000 {
                return Err(TrackingError::InvalidConstellation {
                    body_id,
                    reason: "could not place markers with the requested separation".into(),
                });
            }
            let candidate = loop {
                let v = Vector3::new(
                    rng.gen_range(-radius..radius),
                    rng.gen_range(-radius..radius),
                    rng.gen_range(-radius..radius),
                );
                if v.norm() <= radius {
                    break v;
                }
            };
            let new_d: Vec<f64> = pts.iter().map(|p| (p - candidate).norm()).collect();
            let clash = new_d.iter().enumerate().any(|(i, d)| {
                *d < min_spacing
                    || used.iter().any(|u| (u - d).abs() <= separation)
                    || new_d[..i].iter().any(|e| (e - d).abs() <= separation)
            });
            if clash {
                continue;
            }
            let triangles_clash = (0..pts.len()).any(|i| {
                (0..i).any(|j| {
                    let t = sorted_triangle(new_d[i], new_d[j], (pts[i] - pts[j]).norm());
                    foreign.iter().any(|f| (0..3).all(|k| (f[k] - t[k]).abs() <= separation))
                })
            });
            if !triangles_clash {
                used.extend_from_slice(&new_d);
                pts.push(candidate);
            }
        }
        let centroid = pts.iter().sum::<Vector3<f64>>() / markers as f64;
        let pts: Vec<_> = pts.into_iter().map(|p| p - centroid).collect();
        for i in 0..markers {
            for j in (i + 1)..markers {
                for k in (j + 1)..markers {
                    foreign.push(sorted_triangle(
                        (pts[i] - pts[j]).norm(),
                        (pts[i] - pts[k]).norm(),
                        (pts[j] - pts[k]).norm(),
                    ));
                }
            }
        }
        out.push(Constellation::new(body_id, format!("body{body}"), pts, separation)?);
    }
    Ok(out)
}

fn sorted_triangle(a: f64, b: f64, c: f64) -> [f64; 3] {
    let mut t = [a, b, c];
    t.sort_by(f64::total_cmp);
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signature_is_sorted_pairwise_distances() {
        let c = Constellation::new(
            1,
            "tri",
            vec![Vector3::zeros(), Vector3::new(0.03, 0.0, 0.0), Vector3::new(0.0, 0.06, 0.0)],
            0.005,
        )
        .unwrap();
        let expect = [0.03, 0.06, (0.03f64.powi(2) + 0.06f64.powi(2)).sqrt()];
        let mut expect = expect.to_vec();
        expect.sort_by(f64::total_cmp);
        for (a, b) in c.signature().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_indistinct_distances() {
        // Equilateral triangle: all three distances equal.
        let h = (3.0f64).sqrt() / 2.0 * 0.1;
        let err = Constellation::new(
            0,
            "eq",
            vec![Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.05, h, 0.0)],
            0.005,
        );
        assert!(matches!(err, Err(TrackingError::InvalidConstellation { .. })));
    }

    #[test]
    fn rejects_collinear_and_short() {
        let line: Vec<_> = [0.0, 0.02, 0.05, 0.11]
            .iter()
            .map(|x| Vector3::new(*x, 0.0, 0.0))
            .collect();
        assert!(Constellation::new(0, "line", line, 0.001).is_err());
        assert!(Constellation::new(0, "pair", vec![Vector3::zeros(), Vector3::x()], 0.001).is_err());
    }

    #[test]
    fn designed_sets_have_unambiguous_triangles() {
        let set = design_constellations(4, 6, 0.09, 0.005, 42).unwrap();
        assert!(set.iter().all(|c| c.len() == 6));
        let tris = |c: &Constellation| {
            let mut v = Vec::new();
            for i in 0..6 {
                for j in (i + 1)..6 {
                    for k in (j + 1)..6 {
                        v.push(sorted_triangle(c.distance(i, j), c.distance(i, k), c.distance(j, k)));
                    }
                }
            }
            v
        };
        for a in 0..set.len() {
            for b in (a + 1)..set.len() {
                for ta in tris(&set[a]) {
                    for tb in tris(&set[b]) {
                        assert!((0..3).any(|k| (ta[k] - tb[k]).abs() > 0.005));
                    }
                }
            }
        }
    }

    #[test]
    fn file_round_trip() {
        let set = design_constellations(2, 6, 0.09, 0.005, 7).unwrap();
        let json = serde_json::to_string(&ConstellationFile::from_constellations(&set)).unwrap();
        let back: ConstellationFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_constellations(0.005).unwrap(), set);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let entry = BodyEntry {
            id: 3,
            name: "a".into(),
            markers: vec![[0.0, 0.0, 0.0], [0.03, 0.0, 0.0], [0.0, 0.06, 0.0]],
        };
        let file = ConstellationFile {
            bodies: vec![entry.clone(), entry],
        };
        assert!(file.into_constellations(0.005).is_err());
    }
}

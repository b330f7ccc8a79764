use nalgebra::Vector3;

use super::{
    solve::{solve_rigid_with, Correspondence},
    BodyId, Constellation, MarkerCloud, Pose, TrackerConfig, TrackingError,
};

/// Labeled markers of one body in a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyMatch {
    pub body_id: BodyId,
    /// Sorted by marker index.
    pub pairs: Vec<Correspondence>,
    pub pose: Pose,
    pub residual_rms: f64,
}

impl BodyMatch {
    fn point_set(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.pairs.iter().map(|c| c.observed).collect();
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchOutcome {
    /// In acceptance order (lowest residual first).
    pub matched: Vec<BodyMatch>,
    pub unmatched: Vec<BodyId>,
}

impl MatchOutcome {
    pub fn get(&self, body_id: BodyId) -> Option<&BodyMatch> {
        self.matched.iter().find(|m| m.body_id == body_id)
    }
}

/// Labels markers of every constellation in `cloud`.
///
/// Each body takes its best assignment (most markers, then lowest rigid-fit
/// residual). When bodies compete for points the lowest residual wins, ties to
/// the lower body id, and losers search again among the remaining points.
pub fn match_bodies(
    cloud: &MarkerCloud,
    constellations: &[Constellation],
    cfg: &TrackerConfig,
) -> Result<MatchOutcome, TrackingError> {
    let points = &cloud.points;
    let mut order: Vec<&Constellation> = constellations.iter().collect();
    order.sort_by_key(|c| c.body_id());

    let all_available = vec![true; points.len()];
    let mut cached: Vec<Option<BodyMatch>> = order
        .iter()
        .map(|c| best_assignment(c, points, &all_available, cfg))
        .collect();

    for i in 0..order.len() {
        for j in (i + 1)..order.len() {
            if let (Some(a), Some(b)) = (&cached[i], &cached[j]) {
                if a.point_set() == b.point_set() {
                    return Err(TrackingError::AmbiguousMatch {
                        first: a.body_id,
                        second: b.body_id,
                    });
                }
            }
        }
    }

    let mut available = all_available;
    let mut pending: Vec<usize> = (0..order.len()).collect();
    let mut outcome = MatchOutcome::default();
    loop {
        for &i in &pending {
            let stale = cached[i]
                .as_ref()
                .is_some_and(|m| m.pairs.iter().any(|c| !available[c.observed]));
            if stale {
                cached[i] = best_assignment(order[i], points, &available, cfg);
            }
        }
        let winner = pending
            .iter()
            .enumerate()
            .filter_map(|(slot, &i)| cached[i].as_ref().map(|m| (slot, m)))
            .min_by(|a, b| {
                a.1.residual_rms
                    .total_cmp(&b.1.residual_rms)
                    .then(a.1.body_id.cmp(&b.1.body_id))
            })
            .map(|(slot, _)| slot);
        let Some(slot) = winner else { break };
        let i = pending.remove(slot);
        let m = cached[i].take().expect("winner has a match");
        for c in &m.pairs {
            available[c.observed] = false;
        }
        outcome.matched.push(m);
    }
    outcome.unmatched = pending.iter().map(|&i| order[i].body_id()).collect();
    Ok(outcome)
}

/// Best labeling of `constellation` among the points flagged in `available`.
///
/// Exhaustive backtracking over markers; each marker is either assigned an
/// unused point consistent (within tolerance) with every marker assigned
/// before it, or left unobserved. Among maximal assignments of at least
/// three markers the lowest rigid-fit residual wins, then the
/// lexicographically smallest correspondence list.
pub fn best_assignment(
    constellation: &Constellation,
    points: &[Vector3<f64>],
    available: &[bool],
    cfg: &TrackerConfig,
) -> Option<BodyMatch> {
    let candidates: Vec<usize> = (0..points.len()).filter(|&p| available[p]).collect();
    let mut search = Search {
        constellation,
        points,
        candidates: &candidates,
        tolerance: cfg.match_tolerance,
        assign: vec![None; constellation.len()],
        used: vec![false; points.len()],
        best_count: 3,
        best: Vec::new(),
    };
    search.recurse(0, 0);

    let mut winner: Option<BodyMatch> = None;
    for assignment in search.best {
        let pairs: Vec<Correspondence> = assignment
            .iter()
            .enumerate()
            .filter_map(|(local, p)| p.map(|observed| Correspondence { local, observed }))
            .collect();
        let Ok((pose, residual_rms)) =
            solve_rigid_with(constellation.local_points(), points, &pairs, cfg.collinear_eps)
        else {
            continue;
        };
        let better = match &winner {
            None => true,
            Some(w) => residual_rms
                .total_cmp(&w.residual_rms)
                .then_with(|| pairs.cmp(&w.pairs))
                .is_lt(),
        };
        if better {
            winner = Some(BodyMatch {
                body_id: constellation.body_id(),
                pairs,
                pose,
                residual_rms,
            });
        }
    }
    winner
}

struct Search<'a> {
    constellation: &'a Constellation,
    points: &'a [Vector3<f64>],
    candidates: &'a [usize],
    tolerance: f64,
    assign: Vec<Option<usize>>,
    used: Vec<bool>,
    best_count: usize,
    best: Vec<Vec<Option<usize>>>,
}

impl Search<'_> {
    fn recurse(&mut self, marker: usize, count: usize) {
        let n = self.assign.len();
        if count + (n - marker) < self.best_count {
            return;
        }
        if marker == n {
            if count > self.best_count {
                self.best_count = count;
                self.best.clear();
            }
            self.best.push(self.assign.clone());
            return;
        }
        for &p in self.candidates {
            if self.used[p] || !self.consistent(marker, p) {
                continue;
            }
            self.assign[marker] = Some(p);
            self.used[p] = true;
            self.recurse(marker + 1, count + 1);
            self.used[p] = false;
        }
        self.assign[marker] = None;
        self.recurse(marker + 1, count);
    }

    fn consistent(&self, marker: usize, p: usize) -> bool {
        let q = &self.points[p];
        self.assign[..marker].iter().enumerate().all(|(j, a)| match a {
            None => true,
            Some(o) => {
                let observed = (self.points[*o] - q).norm();
                (observed - self.constellation.distance(marker, j)).abs() <= self.tolerance
            }
        })
    }
}

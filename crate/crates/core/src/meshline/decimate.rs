use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::mesh::{area_vector, cross, dot, norm, sub, Corner, Mesh};
use super::repair::EdgeTable;
use super::surface::SurfaceDistance;
use super::MeshError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecimateOptions {
    /// Weight of the constraint planes that hold boundary edges in place,
    /// relative to the area-weighted face planes.
    pub boundary_weight: f64,
    /// Result vertices sampled for the error estimate.
    pub error_samples: usize,
}

impl Default for DecimateOptions {
    fn default() -> Self {
        Self {
            boundary_weight: 100.0,
            error_samples: 4096,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decimation {
    pub mesh: Mesh,
    /// Largest distance from a sampled result vertex to the input surface.
    pub error: f64,
    pub collapses: usize,
    pub warnings: Vec<String>,
}

/// Symmetric 4×4 quadric, upper triangle row-major.
#[derive(Debug, Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn plane(n: [f64; 3], d: f64, w: f64) -> Self {
        let [a, b, c] = n;
        Self([a * a, a * b, a * c, a * d, b * b, b * c, b * d, c * c, c * d, d * d].map(|x| x * w))
    }

    fn add(&mut self, o: &Quadric) {
        for (x, y) in self.0.iter_mut().zip(o.0) {
            *x += y;
        }
    }

    fn sum(&self, o: &Quadric) -> Quadric {
        let mut q = *self;
        q.add(o);
        q
    }

    fn error(&self, p: [f64; 3]) -> f64 {
        let q = &self.0;
        let [x, y, z] = p;
        (q[0] * x * x + 2.0 * q[1] * x * y + 2.0 * q[2] * x * z + 2.0 * q[3] * x + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9])
            .max(0.0)
    }

    /// Minimiser of the quadric, if the 3×3 system is well conditioned.
    fn optimum(&self) -> Option<[f64; 3]> {
        let q = &self.0;
        let m = nalgebra::Matrix3::new(q[0], q[1], q[2], q[1], q[4], q[5], q[2], q[5], q[7]);
        let scale = q[0].abs() + q[4].abs() + q[7].abs();
        if scale == 0.0 || m.determinant().abs() <= 1e-10 * scale * scale * scale {
            return None;
        }
        let p = m.lu().solve(&nalgebra::Vector3::new(-q[3], -q[6], -q[8]))?;
        Some([p.x, p.y, p.z])
    }
}

/// Heap entry ordered by (cost, a, b) ascending; stamps detect staleness.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    a: u32,
    b: u32,
    stamp_a: u32,
    stamp_b: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // Reversed: BinaryHeap pops the maximum.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.a.cmp(&self.a))
            .then(other.b.cmp(&self.b))
    }
}

type FaceList = SmallVec<[u32; 8]>;

struct State {
    positions: Vec<[f64; 3]>,
    triangles: Vec<[u32; 3]>,
    alive: Vec<bool>,
    faces_of: Vec<FaceList>,
    quadric: Vec<Quadric>,
    stamp: Vec<u32>,
    dead_vertex: Vec<bool>,
    boundary: Vec<bool>,
    locked: Vec<bool>,
}

impl State {
    /// Best position for merging `a` and `b` and its cost.
    fn placement(&self, a: u32, b: u32) -> ([f64; 3], f64) {
        let q = self.quadric[a as usize].sum(&self.quadric[b as usize]);
        let (pa, pb) = (self.positions[a as usize], self.positions[b as usize]);
        let mid = [0, 1, 2].map(|k| (pa[k] + pb[k]) / 2.0);
        let reach = norm(sub(pa, pb));
        if let Some(p) = q.optimum() {
            // A far-away optimum means the system is nearly singular.
            if norm(sub(p, mid)) <= reach {
                return (p, q.error(p));
            }
        }
        let mut best = (pa, q.error(pa));
        for p in [pb, mid] {
            let e = q.error(p);
            if e < best.1 {
                best = (p, e);
            }
        }
        best
    }

    fn candidate(&self, a: u32, b: u32) -> Candidate {
        let (a, b) = (a.min(b), a.max(b));
        Candidate {
            cost: self.placement(a, b).1,
            a,
            b,
            stamp_a: self.stamp[a as usize],
            stamp_b: self.stamp[b as usize],
        }
    }

    fn neighbours(&self, v: u32, out: &mut SmallVec<[u32; 16]>) {
        out.clear();
        for &f in &self.faces_of[v as usize] {
            for w in self.triangles[f as usize] {
                if w != v && !out.contains(&w) {
                    out.push(w);
                }
            }
        }
    }

    /// Checks that collapsing `b` into `a` at `p` keeps the mesh manifold,
    /// free of duplicate faces, unflipped and non-degenerate.
    fn can_collapse(&self, a: u32, b: u32, p: [f64; 3], shared: &[u32], scratch: &mut [SmallVec<[u32; 16]>; 2]) -> bool {
        if shared.is_empty() || shared.len() > 2 {
            return false;
        }
        if shared.len() == 2 && self.boundary[a as usize] && self.boundary[b as usize] {
            return false;
        }
        let [na, nb] = scratch;
        self.neighbours(a, na);
        self.neighbours(b, nb);
        let common = na.iter().filter(|w| nb.contains(w)).count();
        if common != shared.len() {
            return false;
        }
        // Faces of b that would coincide with an existing face of a.
        for &f in &self.faces_of[b as usize] {
            if shared.contains(&f) {
                continue;
            }
            let t = self.triangles[f as usize];
            let others: SmallVec<[u32; 2]> = t.iter().copied().filter(|&w| w != b).collect();
            let duplicate = self.faces_of[a as usize].iter().any(|&g| {
                let u = self.triangles[g as usize];
                others.iter().all(|w| u.contains(w))
            });
            if duplicate {
                return false;
            }
        }
        for moved in [a, b] {
            for &f in &self.faces_of[moved as usize] {
                if shared.contains(&f) {
                    continue;
                }
                let t = self.triangles[f as usize];
                let old = t.map(|w| self.positions[w as usize]);
                let new = t.map(|w| if w == moved { p } else { self.positions[w as usize] });
                let n_old = area_vector(old[0], old[1], old[2]);
                let n_new = area_vector(new[0], new[1], new[2]);
                let (l_old, l_new) = (norm(n_old), norm(n_new));
                if l_new <= 2e-12 || l_new <= 1e-6 * l_old || dot(n_old, n_new) <= 0.0 {
                    return false;
                }
            }
        }
        true
    }

    fn collapse(&mut self, a: u32, b: u32, p: [f64; 3], shared: &[u32]) {
        self.positions[a as usize] = p;
        let qb = self.quadric[b as usize];
        self.quadric[a as usize].add(&qb);
        for &f in shared {
            self.alive[f as usize] = false;
            for w in self.triangles[f as usize] {
                if w != a && w != b {
                    self.faces_of[w as usize].retain(|g| *g != f);
                }
            }
        }
        let moved = std::mem::take(&mut self.faces_of[b as usize]);
        self.faces_of[a as usize].retain(|g| !shared.contains(g));
        for f in moved {
            if shared.contains(&f) {
                continue;
            }
            for w in &mut self.triangles[f as usize] {
                if *w == b {
                    *w = a;
                }
            }
            self.faces_of[a as usize].push(f);
        }
        self.boundary[a as usize] |= self.boundary[b as usize];
        self.dead_vertex[b as usize] = true;
        self.stamp[a as usize] = self.stamp[a as usize].wrapping_add(1);
    }
}

/// Quadric-error edge collapse down to at most `target` triangles.
///
/// Collapses are taken cheapest first, ties to the lower vertex ids, and
/// keep the lower id. Boundary edges carry extra constraint planes. Edges
/// touching non-manifold edges are never collapsed. Texture coordinates and
/// normals do not survive; the result is compacted.
pub fn decimate(mesh: &Mesh, target: usize, options: &DecimateOptions) -> Result<Decimation, MeshError> {
    if !mesh.is_triangulated() {
        return Err(MeshError::NotTriangulated);
    }
    let n_faces = mesh.face_count();
    if target >= n_faces {
        return Ok(Decimation {
            mesh: mesh.clone(),
            error: 0.0,
            collapses: 0,
            warnings: Vec::new(),
        });
    }
    let triangles = mesh.triangles();
    let table = EdgeTable::build(&triangles);
    let n_vertices = mesh.positions.len();
    let mut boundary = vec![false; n_vertices];
    let mut locked = vec![false; n_vertices];
    let mut boundary_edges = Vec::new();
    let mut components = Components::new(n_faces);
    let mut unique_edges = Vec::new();
    for run in table.runs() {
        let (a, b) = ((run[0].0 >> 32) as u32, run[0].0 as u32);
        unique_edges.push((a, b));
        match run.len() {
            1 => {
                boundary[a as usize] = true;
                boundary[b as usize] = true;
                let (from, to) = if run[0].2 { (a, b) } else { (b, a) };
                boundary_edges.push((from, to, run[0].1));
                components.open(run[0].1);
            }
            2 => {
                if run[0].2 == run[1].2 {
                    return Err(MeshError::InconsistentWinding { a, b });
                }
                components.join(run[0].1, run[1].1);
            }
            _ => {
                locked[a as usize] = true;
                locked[b as usize] = true;
                for e in run {
                    components.open(e.1);
                    components.join(run[0].1, e.1);
                }
            }
        }
    }
    let minimum = components.minimum_faces();
    if target < minimum {
        return Err(MeshError::TargetTooSmall { target, minimum });
    }

    let mut state = State {
        positions: mesh.positions.clone(),
        triangles: triangles.clone(),
        alive: vec![true; n_faces],
        faces_of: vec![FaceList::new(); n_vertices],
        quadric: vec![Quadric::default(); n_vertices],
        stamp: vec![0; n_vertices],
        dead_vertex: vec![false; n_vertices],
        boundary,
        locked,
    };
    for (f, t) in triangles.iter().enumerate() {
        let p = t.map(|i| mesh.positions[i as usize]);
        let n = area_vector(p[0], p[1], p[2]);
        let len = norm(n);
        for &v in t {
            state.faces_of[v as usize].push(f as u32);
        }
        if len == 0.0 {
            continue;
        }
        let unit = n.map(|x| x / len);
        let q = Quadric::plane(unit, -dot(unit, p[0]), len / 2.0);
        for &v in t {
            state.quadric[v as usize].add(&q);
        }
    }
    // Boundary edges get a plane through the edge, perpendicular to the face.
    for &(a, b, f) in &boundary_edges {
        let p = triangles[f as usize].map(|i| mesh.positions[i as usize]);
        let n = area_vector(p[0], p[1], p[2]);
        let (pa, pb) = (mesh.positions[a as usize], mesh.positions[b as usize]);
        let e = sub(pb, pa);
        let m = cross(e, n);
        let len = norm(m);
        if len == 0.0 {
            continue;
        }
        let unit = m.map(|x| x / len);
        let q = Quadric::plane(unit, -dot(unit, pa), options.boundary_weight * dot(e, e));
        state.quadric[a as usize].add(&q);
        state.quadric[b as usize].add(&q);
    }
    drop(table);

    let mut heap: BinaryHeap<Candidate> = unique_edges
        .iter()
        .filter(|&&(a, b)| !state.locked[a as usize] && !state.locked[b as usize])
        .map(|&(a, b)| state.candidate(a, b))
        .collect();
    drop(unique_edges);

    let mut remaining = n_faces;
    let mut collapses = 0;
    let mut shared: SmallVec<[u32; 4]> = SmallVec::new();
    let mut scratch = [SmallVec::new(), SmallVec::new()];
    let mut around: SmallVec<[u32; 16]> = SmallVec::new();
    while remaining > target {
        let Some(c) = heap.pop() else {
            return Err(MeshError::TargetUnreachable { target, reached: remaining });
        };
        let (a, b) = (c.a, c.b);
        if state.dead_vertex[a as usize]
            || state.dead_vertex[b as usize]
            || state.stamp[a as usize] != c.stamp_a
            || state.stamp[b as usize] != c.stamp_b
        {
            continue;
        }
        shared.clear();
        shared.extend(
            state.faces_of[a as usize]
                .iter()
                .copied()
                .filter(|&f| state.triangles[f as usize].contains(&b)),
        );
        let (p, _) = state.placement(a, b);
        if !state.can_collapse(a, b, p, &shared, &mut scratch) {
            continue;
        }
        state.collapse(a, b, p, &shared);
        remaining -= shared.len();
        collapses += 1;
        state.neighbours(a, &mut around);
        for &w in &around {
            if !state.locked[w as usize] {
                heap.push(state.candidate(a, w));
            }
        }
    }

    let groups = mesh.face_groups();
    let kept: Vec<(usize, [Corner; 3])> = (0..n_faces)
        .filter(|&f| state.alive[f])
        .map(|f| (groups[f] as usize, state.triangles[f].map(Corner::at)))
        .collect();
    let mut out = mesh.rebuild(kept.iter().map(|(g, c)| (*g, &c[..])));
    out.positions = state.positions;
    let mut warnings = Vec::new();
    if mesh.has_texcoords() || mesh.has_normals() {
        warnings.push("texture coordinates and normals dropped by decimation".to_string());
    }
    out.strip_attributes();
    out.compact();

    let reference = SurfaceDistance::new(&mesh.positions, &triangles);
    let step = (out.positions.len() / options.error_samples.max(1)).max(1);
    let error = out
        .positions
        .iter()
        .step_by(step)
        .map(|&p| reference.distance(p))
        .fold(0.0, f64::max);
    Ok(Decimation {
        mesh: out,
        error,
        collapses,
        warnings,
    })
}

/// Union-find over faces that also tracks whether each component is open.
struct Components {
    parent: Vec<u32>,
    open: Vec<bool>,
}

impl Components {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            open: vec![false; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let up = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = up;
            x = up;
        }
        x
    }

    fn join(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi as usize] = lo;
            self.open[lo as usize] |= self.open[hi as usize];
        }
    }

    fn open(&mut self, f: u32) {
        let r = self.find(f);
        self.open[r as usize] = true;
    }

    /// Closed components need 4 faces, open ones 1.
    fn minimum_faces(&self) -> usize {
        (0..self.parent.len())
            .filter(|&f| self.parent[f] as usize == f)
            .map(|r| if self.open[r] { 1 } else { 4 })
            .sum()
    }
}

use std::collections::VecDeque;

use super::mesh::{area_vector, dot, triple, Mesh, NO_INDEX};
use super::MeshError;

#[derive(Debug, Clone)]
pub struct Repair {
    pub mesh: Mesh,
    pub flipped: usize,
    pub non_manifold_edges: usize,
    pub components: usize,
    /// Components with boundary or non-manifold edges, oriented by vote.
    pub open_components: usize,
    pub warnings: Vec<String>,
}

/// Edge-to-face incidence of a triangle mesh, grouped by undirected edge.
pub(crate) struct EdgeTable {
    /// (edge key, face, forward) sorted by key, where forward means the
    /// face walks the edge from the lower to the higher vertex.
    pub entries: Vec<(u64, u32, bool)>,
}

impl EdgeTable {
    pub fn build(triangles: &[[u32; 3]]) -> Self {
        let mut entries = Vec::with_capacity(triangles.len() * 3);
        for (f, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                entries.push((key(a, b), f as u32, a < b));
            }
        }
        entries.sort_unstable();
        Self { entries }
    }

    /// Runs of entries sharing one undirected edge.
    pub fn runs(&self) -> impl Iterator<Item = &[(u64, u32, bool)]> + '_ {
        self.entries.chunk_by(|a, b| a.0 == b.0)
    }
}

pub(crate) fn key(a: u32, b: u32) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    (lo as u64) << 32 | hi as u64
}

/// Makes winding consistent within each edge-connected component and points
/// closed components outward (positive signed volume). Open components keep
/// the orientation most of their faces (or their stored normals) agree
/// with. Edges shared by more than two faces are counted and do not connect
/// components. Flipped faces get negated copies of their normals.
pub fn repair_normals(mesh: &Mesh) -> Result<Repair, MeshError> {
    if !mesh.is_triangulated() {
        return Err(MeshError::NotTriangulated);
    }
    let triangles = mesh.triangles();
    let n = triangles.len();
    let table = EdgeTable::build(&triangles);

    // Face adjacency across manifold edges: (neighbour, same direction).
    let mut degree = vec![0u32; n + 1];
    let mut open_face = vec![false; n];
    let mut non_manifold_edges = 0;
    for run in table.runs() {
        match run.len() {
            2 => {
                degree[run[0].1 as usize + 1] += 1;
                degree[run[1].1 as usize + 1] += 1;
            }
            len => {
                non_manifold_edges += usize::from(len > 2);
                for e in run {
                    open_face[e.1 as usize] = true;
                }
            }
        }
    }
    for i in 0..n {
        degree[i + 1] += degree[i];
    }
    let mut fill = degree.clone();
    let mut links = vec![(0u32, false); degree[n] as usize];
    for run in table.runs().filter(|r| r.len() == 2) {
        let same = run[0].2 == run[1].2;
        for (a, b) in [(run[0].1, run[1].1), (run[1].1, run[0].1)] {
            links[fill[a as usize] as usize] = (b, same);
            fill[a as usize] += 1;
        }
    }

    let has_normals = mesh.has_normals();
    let mut flip: Vec<Option<bool>> = vec![None; n];
    let mut members = Vec::new();
    let mut queue = VecDeque::new();
    let mut components = 0;
    let mut open_components = 0;
    for root in 0..n {
        if flip[root].is_some() {
            continue;
        }
        components += 1;
        members.clear();
        flip[root] = Some(false);
        queue.push_back(root);
        let mut open = false;
        while let Some(f) = queue.pop_front() {
            members.push(f);
            open |= open_face[f];
            let here = flip[f].expect("visited");
            for &(g, same) in &links[degree[f] as usize..degree[f + 1] as usize] {
                let want = here ^ same;
                match flip[g as usize] {
                    None => {
                        flip[g as usize] = Some(want);
                        queue.push_back(g as usize);
                    }
                    Some(have) if have != want => return Err(MeshError::NonOrientable { face: root }),
                    Some(_) => {}
                }
            }
        }
        let invert = if open {
            open_components += 1;
            let vote: f64 = if has_normals {
                members
                    .iter()
                    .map(|&f| {
                        let [a, b, c] = triangles[f].map(|i| mesh.positions[i as usize]);
                        let s = dot(area_vector(a, b, c), corner_normal_sum(mesh, f));
                        if flip[f] == Some(true) { -s.signum() } else { s.signum() }
                    })
                    .sum()
            } else {
                members.iter().map(|&f| if flip[f] == Some(true) { -1.0 } else { 1.0 }).sum()
            };
            vote < 0.0
        } else {
            let volume: f64 = members
                .iter()
                .map(|&f| {
                    let [a, b, c] = triangles[f].map(|i| mesh.positions[i as usize]);
                    let v = triple(a, b, c);
                    if flip[f] == Some(true) { -v } else { v }
                })
                .sum();
            volume < 0.0
        };
        if invert {
            for &f in &members {
                flip[f] = flip[f].map(|x| !x);
            }
        }
    }

    let mut out = mesh.clone();
    let mut negated = vec![NO_INDEX; mesh.normals.len()];
    let mut flipped = 0;
    for f in 0..n {
        if flip[f] == Some(true) {
            flipped += 1;
            out.flip_face(f);
            if has_normals {
                negate_normals(&mut out, f, &mut negated);
            }
        }
    }
    let mut warnings = Vec::new();
    if non_manifold_edges > 0 {
        warnings.push(format!("{non_manifold_edges} non-manifold edges left as they are"));
    }
    if open_components > 0 {
        warnings.push(format!("{open_components} open components oriented by majority vote"));
    }
    Ok(Repair {
        mesh: out,
        flipped,
        non_manifold_edges,
        components,
        open_components,
        warnings,
    })
}

fn corner_normal_sum(mesh: &Mesh, f: usize) -> [f64; 3] {
    let mut s = [0.0; 3];
    for c in mesh.face(f) {
        if c.vn != NO_INDEX {
            let n = mesh.normals[c.vn as usize];
            for k in 0..3 {
                s[k] += n[k];
            }
        }
    }
    s
}

/// Points face `f`'s corners at negated copies of their normals, sharing
/// copies between flipped faces.
fn negate_normals(mesh: &mut Mesh, f: usize, negated: &mut [u32]) {
    let corners: Vec<u32> = mesh.face(f).iter().map(|c| c.vn).collect();
    let mut remapped = Vec::with_capacity(3);
    for vn in corners {
        if vn == NO_INDEX || vn as usize >= negated.len() {
            remapped.push(vn);
            continue;
        }
        if negated[vn as usize] == NO_INDEX {
            let n = mesh.normals[vn as usize];
            mesh.normals.push([-n[0], -n[1], -n[2]]);
            negated[vn as usize] = (mesh.normals.len() - 1) as u32;
        }
        remapped.push(negated[vn as usize]);
    }
    mesh.set_face_normals(f, &remapped);
}

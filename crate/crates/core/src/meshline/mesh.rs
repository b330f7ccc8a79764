use std::ops::Range;

use serde::Serialize;

/// Marks an absent texcoord or normal index in a [`Corner`].
pub const NO_INDEX: u32 = u32::MAX;

/// One polygon corner: a position index plus optional texcoord and normal
/// indices, as in OBJ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Corner {
    pub v: u32,
    pub vt: u32,
    pub vn: u32,
}

impl Corner {
    pub const fn at(v: u32) -> Self {
        Self { v, vt: NO_INDEX, vn: NO_INDEX }
    }
}

/// Contiguous run of faces sharing a name and material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub name: String,
    pub material: Option<String>,
    pub faces: Range<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SourceStats {
    pub faces: usize,
    /// Sum of (corners - 2) over faces.
    pub triangles: usize,
}

/// Polygon mesh. Groups are ordered, contiguous and cover every face; faces
/// have at least three corners and never repeat a position within a face.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub positions: Vec<[f64; 3]>,
    pub texcoords: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 3]>,
    face_start: Vec<u32>,
    corners: Vec<Corner>,
    groups: Vec<Group>,
    pub material_libs: Vec<String>,
    pub source: SourceStats,
}

impl Mesh {
    pub fn new() -> Self {
        Self {
            face_start: vec![0],
            ..Self::default()
        }
    }

    /// Triangle mesh in one group named "default".
    pub fn from_triangles(positions: Vec<[f64; 3]>, triangles: &[[u32; 3]]) -> Self {
        let mut mesh = Self::new();
        mesh.positions = positions;
        mesh.corners.reserve(triangles.len() * 3);
        for t in triangles {
            mesh.push_face(&t.map(Corner::at));
        }
        mesh.source = mesh.stats();
        mesh
    }

    pub fn face_count(&self) -> usize {
        self.face_start.len().saturating_sub(1)
    }

    pub fn face(&self, i: usize) -> &[Corner] {
        &self.corners[self.face_start[i] as usize..self.face_start[i + 1] as usize]
    }

    pub fn faces(&self) -> impl Iterator<Item = &[Corner]> + '_ {
        (0..self.face_count()).map(|i| self.face(i))
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn is_triangulated(&self) -> bool {
        self.faces().all(|f| f.len() == 3)
    }

    /// Position indices of face `i`, which must be a triangle.
    pub fn triangle(&self, i: usize) -> [u32; 3] {
        let f = self.face(i);
        debug_assert_eq!(f.len(), 3);
        [f[0].v, f[1].v, f[2].v]
    }

    pub fn triangles(&self) -> Vec<[u32; 3]> {
        (0..self.face_count()).map(|i| self.triangle(i)).collect()
    }

    pub fn stats(&self) -> SourceStats {
        SourceStats {
            faces: self.face_count(),
            triangles: self.faces().map(|f| f.len() - 2).sum(),
        }
    }

    pub fn has_texcoords(&self) -> bool {
        self.corners.iter().any(|c| c.vt != NO_INDEX)
    }

    pub fn has_normals(&self) -> bool {
        self.corners.iter().any(|c| c.vn != NO_INDEX)
    }

    /// Bounding box diagonal of the positions used by faces.
    pub fn diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for c in &self.corners {
            let p = self.positions[c.v as usize];
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if lo[0] > hi[0] {
            return 0.0;
        }
        (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
    }

    /// Starts a new group at the next face. An empty current group is
    /// replaced instead of left behind.
    pub fn begin_group(&mut self, name: &str, material: Option<&str>) {
        let at = self.face_count();
        if let Some(last) = self.groups.last_mut() {
            if last.faces.is_empty() {
                last.name = name.to_string();
                last.material = material.map(str::to_string);
                return;
            }
        }
        self.groups.push(Group {
            name: name.to_string(),
            material: material.map(str::to_string),
            faces: at..at,
        });
    }

    /// Appends a face to the current group. Indices must be in range and
    /// the face must have at least three distinct positions.
    pub(crate) fn push_face(&mut self, corners: &[Corner]) {
        debug_assert!(corners.len() >= 3);
        if self.groups.is_empty() {
            self.begin_group("default", None);
        }
        self.corners.extend_from_slice(corners);
        self.face_start.push(self.corners.len() as u32);
        self.groups.last_mut().expect("group exists").faces.end += 1;
    }

    /// Replace all faces, keeping attributes. `faces` yields (group, corners)
    /// and must be ordered by group index.
    pub(crate) fn rebuild<'a>(&self, faces: impl Iterator<Item = (usize, &'a [Corner])>) -> Mesh {
        let mut out = Mesh {
            positions: self.positions.clone(),
            texcoords: self.texcoords.clone(),
            normals: self.normals.clone(),
            material_libs: self.material_libs.clone(),
            source: self.source,
            ..Mesh::new()
        };
        let mut current = None;
        for (g, corners) in faces {
            if current != Some(g) {
                let group = &self.groups[g];
                out.groups.push(Group {
                    name: group.name.clone(),
                    material: group.material.clone(),
                    faces: out.face_count()..out.face_count(),
                });
                current = Some(g);
            }
            out.push_face(corners);
        }
        out
    }

    /// Group index of every face.
    pub(crate) fn face_groups(&self) -> Vec<u32> {
        let mut out = vec![0; self.face_count()];
        for (g, group) in self.groups.iter().enumerate() {
            out[group.faces.clone()].fill(g as u32);
        }
        out
    }

    /// Drops positions, texcoords and normals no face refers to, keeping the
    /// relative order of the rest.
    pub fn compact(&mut self) {
        fn remap<T: Copy>(data: &mut Vec<T>, corners: &mut [Corner], field: fn(&mut Corner) -> &mut u32) {
            let mut map = vec![NO_INDEX; data.len()];
            for c in corners.iter_mut() {
                let id = *field(c);
                if id != NO_INDEX {
                    map[id as usize] = 0;
                }
            }
            let mut kept = Vec::new();
            for (i, slot) in map.iter_mut().enumerate() {
                if *slot == 0 {
                    *slot = kept.len() as u32;
                    kept.push(data[i]);
                }
            }
            for c in corners {
                let id = field(c);
                if *id != NO_INDEX {
                    *id = map[*id as usize];
                }
            }
            *data = kept;
        }
        remap(&mut self.positions, &mut self.corners, |c| &mut c.v);
        remap(&mut self.texcoords, &mut self.corners, |c| &mut c.vt);
        remap(&mut self.normals, &mut self.corners, |c| &mut c.vn);
    }

    /// Reverses the corner order of face `i`.
    pub(crate) fn flip_face(&mut self, i: usize) {
        let (a, b) = (self.face_start[i] as usize, self.face_start[i + 1] as usize);
        self.corners[a..b].reverse();
    }

    pub(crate) fn set_face_normals(&mut self, i: usize, vn: &[u32]) {
        let a = self.face_start[i] as usize;
        for (c, &n) in self.corners[a..].iter_mut().zip(vn) {
            c.vn = n;
        }
    }

    /// Clears texcoord and normal references; geometry edits invalidate them.
    pub(crate) fn strip_attributes(&mut self) {
        for c in &mut self.corners {
            c.vt = NO_INDEX;
            c.vn = NO_INDEX;
        }
        self.texcoords.clear();
        self.normals.clear();
    }
}

/// Signed volume enclosed by triangles (divergence theorem); positive when
/// a closed surface is wound counter-clockwise seen from outside.
pub fn signed_volume(positions: &[[f64; 3]], triangles: &[[u32; 3]]) -> f64 {
    triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| positions[i as usize]);
            triple(a, b, c)
        })
        .sum::<f64>()
        / 6.0
}

/// a · (b × c)
pub(crate) fn triple(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    dot(a, cross(b, c))
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Twice the area vector of a triangle.
pub(crate) fn area_vector(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    cross(sub(b, a), sub(c, a))
}

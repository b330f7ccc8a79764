use super::mesh::{cross, dot, norm, sub, Corner, Mesh};

#[derive(Debug, Clone)]
pub struct Triangulation {
    pub mesh: Mesh,
    /// Polygons that were not convex and were fanned anyway.
    pub concave: usize,
    pub warnings: Vec<String>,
}

/// Fans every polygon from its first corner. Orientation and the vector
/// area of each polygon are preserved; concave polygons are fanned too and
/// counted.
pub fn triangulate(mesh: &Mesh) -> Triangulation {
    let groups = mesh.face_groups();
    let mut corners: Vec<Corner> = Vec::with_capacity(mesh.stats().triangles * 3);
    let mut owner = Vec::with_capacity(mesh.stats().triangles);
    let mut concave = 0;
    for (f, face) in mesh.faces().enumerate() {
        if face.len() > 3 && !is_convex(mesh, face) {
            concave += 1;
        }
        for i in 1..face.len() - 1 {
            corners.extend_from_slice(&[face[0], face[i], face[i + 1]]);
            owner.push(groups[f] as usize);
        }
    }
    let mut warnings = Vec::new();
    if concave > 0 {
        warnings.push(format!("{concave} concave polygons fan-triangulated; check their triangles"));
    }
    Triangulation {
        mesh: mesh.rebuild(owner.into_iter().zip(corners.chunks(3))),
        concave,
        warnings,
    }
}

/// Convex when every corner turns the same way as the Newell normal.
fn is_convex(mesh: &Mesh, face: &[Corner]) -> bool {
    let p: Vec<[f64; 3]> = face.iter().map(|c| mesh.positions[c.v as usize]).collect();
    let n = p.len();
    let mut normal = [0.0; 3];
    for i in 0..n {
        let (a, b) = (p[i], p[(i + 1) % n]);
        normal[0] += (a[1] - b[1]) * (a[2] + b[2]);
        normal[1] += (a[2] - b[2]) * (a[0] + b[0]);
        normal[2] += (a[0] - b[0]) * (a[1] + b[1]);
    }
    let len = norm(normal);
    if len == 0.0 {
        return false;
    }
    (0..n).all(|i| {
        let e1 = sub(p[i], p[(i + n - 1) % n]);
        let e2 = sub(p[(i + 1) % n], p[i]);
        dot(cross(e1, e2), normal) / len >= -1e-12 * norm(e1) * norm(e2)
    })
}

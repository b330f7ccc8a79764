//! Procedural test meshes.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::mesh::{Corner, Mesh};

/// Axis-aligned cube centred on the origin, 12 outward-wound triangles.
pub fn cube(size: f64) -> Mesh {
    let h = size / 2.0;
    let positions = (0..8)
        .map(|i| [if i & 1 == 0 { -h } else { h }, if i & 2 == 0 { -h } else { h }, if i & 4 == 0 { -h } else { h }])
        .collect();
    Mesh::from_triangles(positions, &CUBE_QUADS.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect::<Vec<_>>())
}

/// The same cube as six quads.
pub fn cube_quads(size: f64) -> Mesh {
    let tri = cube(size);
    let mut mesh = Mesh::new();
    mesh.positions = tri.positions;
    for q in CUBE_QUADS {
        mesh.push_face(&q.map(Corner::at));
    }
    mesh.source = mesh.stats();
    mesh
}

/// Counter-clockwise seen from outside; vertex i has coordinates from bits
/// (x = bit 0, y = bit 1, z = bit 2).
const CUBE_QUADS: [[u32; 4]; 6] = [
    [0, 2, 3, 1], // -z
    [4, 5, 7, 6], // +z
    [0, 1, 5, 4], // -y
    [2, 6, 7, 3], // +y
    [0, 4, 6, 2], // -x
    [1, 3, 7, 5], // +x
];

/// Subdivided icosahedron: 20·4^level outward-wound triangles.
pub fn icosphere(level: u32, radius: f64) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .map(unit)
    .to_vec();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, positions: &mut Vec<[f64; 3]>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (positions[a as usize], positions[b as usize]);
                positions.push(unit([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                (positions.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut positions);
            let bc = midpoint(b, c, &mut positions);
            let ca = midpoint(c, a, &mut positions);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let positions = positions.into_iter().map(|p| p.map(|x| x * radius)).collect();
    Mesh::from_triangles(positions, &faces)
}

fn unit(p: [f64; 3]) -> [f64; 3] {
    let l = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    p.map(|x| x / l)
}

/// Closed, smooth, ship-like hull along x with `around` segments per ring and
/// `along` latitude bands: 2·around·(along − 1) outward-wound triangles.
/// `hull(1000, 751)` has 1.5 million.
pub fn hull(around: u32, along: u32) -> Mesh {
    assert!(around >= 3 && along >= 2);
    let length = 60.0;
    let mut positions = Vec::with_capacity((around * (along - 1) + 2) as usize);
    positions.push([-length / 2.0, 0.0, 0.0]);
    for j in 1..along {
        let theta = PI * j as f64 / along as f64;
        // Blunt bow and stern, widest amidships.
        let r = theta.sin().powf(0.6);
        let x = -length / 2.0 * theta.cos();
        for i in 0..around {
            let phi = 2.0 * PI * i as f64 / around as f64;
            let (s, c) = phi.sin_cos();
            // Flatter deck above, deeper keel below.
            let z = if s >= 0.0 { 2.0 * s } else { 4.0 * s };
            positions.push([x, 5.0 * r * c, r * z]);
        }
    }
    positions.push([length / 2.0, 0.0, 0.0]);
    let last = positions.len() as u32 - 1;
    let ring = |j: u32, i: u32| 1 + (j - 1) * around + i % around;
    let mut faces = Vec::with_capacity((2 * around * (along - 1)) as usize);
    for i in 0..around {
        faces.push([0, ring(1, i + 1), ring(1, i)]);
        faces.push([last, ring(along - 1, i), ring(along - 1, i + 1)]);
    }
    for j in 1..along - 1 {
        for i in 0..around {
            let (a, b, c, d) = (ring(j, i), ring(j, i + 1), ring(j + 1, i), ring(j + 1, i + 1));
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    Mesh::from_triangles(positions, &faces)
}

/// Strip with `half_twists` half twists, `around` segments and `across`
/// rows of vertices. Odd twist counts give a non-orientable surface.
pub fn mobius(half_twists: u32, around: u32, across: u32) -> Mesh {
    assert!(around >= 3 && across >= 2);
    let (radius, half_width) = (1.0, 0.3);
    let mut positions = Vec::with_capacity((around * across) as usize);
    for i in 0..around {
        let u = 2.0 * PI * i as f64 / around as f64;
        let twist = half_twists as f64 * u / 2.0;
        for j in 0..across {
            let v = -half_width + 2.0 * half_width * j as f64 / (across - 1) as f64;
            let r = radius + v * twist.cos();
            positions.push([r * u.cos(), r * u.sin(), v * twist.sin()]);
        }
    }
    let id = |i: u32, j: u32| match i {
        // Closing the loop: an odd twist count reverses the row.
        _ if i < around => i * across + j,
        _ if half_twists % 2 == 1 => across - 1 - j,
        _ => j,
    };
    let mut faces = Vec::new();
    for i in 0..around {
        for j in 0..across - 1 {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    Mesh::from_triangles(positions, &faces)
}

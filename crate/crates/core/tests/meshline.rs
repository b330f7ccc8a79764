use std::collections::HashMap;
use std::time::Instant;

use holodeck_core::meshline::shapes::{cube, cube_quads, hull, icosphere, mobius};
use holodeck_core::meshline::{
    decimate, export_obj, parse_obj, read_obj, read_scene, repair_normals, run_pipeline, DecimateOptions, Mesh,
    MeshError, PipelineConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Volume via the divergence theorem, summed per tetrahedron against the centroid.
fn volume(m: &Mesh) -> f64 {
    let n = m.positions.len() as f64;
    let c = m.positions.iter().fold([0.0; 3], |s, p| [s[0] + p[0] / n, s[1] + p[1] / n, s[2] + p[2] / n]);
    m.triangles()
        .iter()
        .map(|t| {
            let [a, b, d] = t.map(|i| sub(m.positions[i as usize], c));
            dot(a, cross(b, d)) / 6.0
        })
        .sum()
}

fn segment_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = sub(b, a);
    let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
    let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    dot(sub(p, q), sub(p, q)).sqrt()
}

/// Plane projection when the foot lies inside (same-side tests), else the
/// nearest edge.
fn triangle_distance(p: [f64; 3], [a, b, c]: [[f64; 3]; 3]) -> f64 {
    let n = cross(sub(b, a), sub(c, a));
    let nn = dot(n, n);
    let h = dot(sub(p, a), n) / nn;
    let foot = [p[0] - h * n[0], p[1] - h * n[1], p[2] - h * n[2]];
    let inside = [(a, b), (b, c), (c, a)].iter().all(|&(u, v)| dot(cross(sub(v, u), sub(foot, u)), n) >= 0.0);
    if inside {
        h.abs() * nn.sqrt()
    } else {
        segment_distance(p, a, b).min(segment_distance(p, b, c)).min(segment_distance(p, c, a))
    }
}

fn brute_distance(p: [f64; 3], m: &Mesh) -> f64 {
    m.triangles()
        .iter()
        .map(|t| triangle_distance(p, t.map(|i| m.positions[i as usize])))
        .fold(f64::INFINITY, f64::min)
}

fn flipped_cube() -> Mesh {
    let c = cube(2.0);
    let mut tris = c.triangles();
    tris[5].swap(1, 2);
    Mesh::from_triangles(c.positions, &tris)
}

/// Every manifold edge is walked once in each direction.
fn assert_consistent(m: &Mesh) {
    let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
    for t in m.triangles() {
        for k in 0..3 {
            *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    for (&(a, b), &n) in &directed {
        assert_eq!(n, 1, "edge {a}->{b} walked {n} times");
    }
}

#[test]
fn flipped_cube_is_repaired() {
    let m = flipped_cube();
    assert!(volume(&m) < 8.0);
    let r = repair_normals(&m).unwrap();
    assert_eq!(r.flipped, 1);
    assert!((volume(&r.mesh) - 8.0).abs() < 1e-9);
    assert_consistent(&r.mesh);
}

#[test]
fn inside_out_cube_is_turned_outward() {
    let c = cube(2.0);
    let tris: Vec<[u32; 3]> = c.triangles().iter().map(|t| [t[0], t[2], t[1]]).collect();
    let r = repair_normals(&Mesh::from_triangles(c.positions, &tris)).unwrap();
    assert_eq!(r.flipped, 12);
    assert!(volume(&r.mesh) > 0.0);
}

#[test]
fn consistent_cube_is_unchanged() {
    let c = cube(2.0);
    let r = repair_normals(&c).unwrap();
    assert_eq!(r.flipped, 0);
    assert_eq!(r.mesh.triangles(), c.triangles());
}

#[test]
fn mobius_strip_is_non_orientable() {
    assert!(matches!(repair_normals(&mobius(3, 40, 3)), Err(MeshError::NonOrientable { .. })));
    // An even twist count is an ordinary band.
    let band = repair_normals(&mobius(2, 40, 3)).unwrap();
    assert_eq!(band.open_components, 1);
}

#[test]
fn non_manifold_edges_are_reported() {
    // Three triangles sharing edge 0-1.
    let p = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]];
    let m = Mesh::from_triangles(p, &[[0, 1, 2], [1, 0, 3], [0, 1, 4]]);
    let r = repair_normals(&m).unwrap();
    assert_eq!(r.non_manifold_edges, 1);
    assert_eq!(r.mesh.triangles(), m.triangles());
}

fn scramble(m: &Mesh, seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tris: Vec<[u32; 3]> =
        m.triangles().iter().map(|&t| if rng.gen_bool(0.3) { [t[0], t[2], t[1]] } else { t }).collect();
    Mesh::from_triangles(m.positions.clone(), &tris)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn repair_restores_winding(seed in any::<u64>(), level in 0u32..3, around in 3u32..12) {
        for m in [icosphere(level, 1.5), hull(around, 6)] {
            let r = repair_normals(&scramble(&m, seed)).unwrap();
            assert_consistent(&r.mesh);
            prop_assert!(volume(&r.mesh) > 0.0);
            let r2 = repair_normals(&r.mesh).unwrap();
            prop_assert_eq!(r2.flipped, 0);
        }
    }

    #[test]
    fn decimation_is_sound(level in 1u32..4, fraction in 0.05f64..0.95, seed in 0u64..4) {
        let m = if seed == 0 { hull(12, 9) } else { icosphere(level, 1.0 + seed as f64) };
        let target = ((m.face_count() as f64 * fraction) as usize).max(4);
        let d = decimate(&m, target, &DecimateOptions::default()).unwrap();
        prop_assert!(d.mesh.face_count() <= target);
        for t in d.mesh.triangles() {
            let [a, b, c] = t.map(|i| d.mesh.positions[i as usize]);
            let n = cross(sub(b, a), sub(c, a));
            prop_assert!(dot(n, n).sqrt() / 2.0 > 1e-12);
        }
        let r = repair_normals(&d.mesh).unwrap();
        prop_assert_eq!(r.flipped, 0);
        prop_assert!(volume(&d.mesh) > 0.0);
    }

    #[test]
    fn export_then_parse_is_identity(
        positions in prop::collection::vec(prop::array::uniform3(-1e6f64..1e6), 3..40),
        picks in prop::collection::vec(prop::array::uniform3(any::<prop::sample::Index>()), 1..60),
    ) {
        let n = positions.len();
        let faces: Vec<[u32; 3]> = picks
            .iter()
            .map(|p| p.map(|i| i.index(n) as u32))
            .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
            .collect();
        let m = Mesh::from_triangles(positions, &faces);
        let mut text = Vec::new();
        export_obj(&m, &mut text).unwrap();
        let back = parse_obj(text.as_slice()).unwrap().mesh;
        prop_assert_eq!(&back.positions, &m.positions);
        prop_assert_eq!(back.triangles(), m.triangles());
    }
}

#[test]
fn decimating_above_the_count_is_identity() {
    let s = icosphere(2, 1.0);
    let d = decimate(&s, 320, &DecimateOptions::default()).unwrap();
    assert_eq!(d.error, 0.0);
    assert_eq!(d.mesh.triangles(), s.triangles());
}

#[test]
fn target_below_closed_minimum_is_rejected() {
    let two = {
        let a = cube(1.0);
        let mut p = a.positions.clone();
        p.extend(a.positions.iter().map(|q| [q[0] + 5.0, q[1], q[2]]));
        let mut t = a.triangles();
        t.extend(a.triangles().iter().map(|x| x.map(|i| i + 8)));
        Mesh::from_triangles(p, &t)
    };
    assert!(matches!(
        decimate(&two, 7, &DecimateOptions::default()),
        Err(MeshError::TargetTooSmall { target: 7, minimum: 8 })
    ));
    let d = decimate(&two, 8, &DecimateOptions::default()).unwrap();
    assert_eq!(d.mesh.face_count(), 8);
}

#[test]
fn icosphere_decimation_stays_close() {
    let s = icosphere(4, 1.0);
    assert_eq!(s.face_count(), 5120);
    let d = decimate(&s, 1280, &DecimateOptions::default()).unwrap();
    assert!(d.mesh.face_count() <= 1280);
    let diag = s.diagonal();
    // Random surface samples of the result plus its vertices, measured
    // against every original triangle.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for t in d.mesh.triangles() {
        let [a, b, c] = t.map(|i| d.mesh.positions[i as usize]);
        for k in 0..4 {
            let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
            if u + v > 1.0 {
                (u, v) = (1.0 - u, 1.0 - v);
            }
            let p = if k == 0 { a } else { [0, 1, 2].map(|j| a[j] + u * (b[j] - a[j]) + v * (c[j] - a[j])) };
            worst = worst.max(brute_distance(p, &s));
        }
    }
    assert!(worst < 0.01 * diag, "hausdorff {worst} vs diagonal {diag}");
    assert!(d.error <= worst + 1e-12);
}

fn write_obj(dir: &std::path::Path, name: &str, m: &Mesh) -> std::path::PathBuf {
    let path = dir.join(name);
    export_obj(m, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn pipeline_on_a_cube() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_obj(dir.path(), "cube.obj", &cube_quads(2.0));
    let out = dir.path().join("cube.hdsc");
    let config = PipelineConfig::from_json(r#"{"target_triangles": 12}"#).unwrap();
    let report = run_pipeline(&input, &out, &config).unwrap();
    assert_eq!(report.triangles, 12);
    assert_eq!(report.flipped_faces, 0);
    assert_eq!(report.source.faces, 6);
    assert_eq!(report.source.triangles, 12);
    let stages: Vec<&str> = report.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(stages, ["parse", "triangulate", "repair", "decimate", "materials", "export"]);
    let scene = read_scene(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(scene.triangle_count(), 12);
    assert_eq!(read_obj(&out.with_extension("obj")).unwrap().mesh.face_count(), 12);
    serde_json::to_string(&report).unwrap();
}

#[test]
fn pipeline_without_decimation_keeps_faces() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_obj(dir.path(), "s.obj", &icosphere(2, 1.0));
    let out = dir.path().join("s.hdsc");
    let config = PipelineConfig::from_json(r#"{"target_triangles": 20, "decimate": false}"#).unwrap();
    let report = run_pipeline(&input, &out, &config).unwrap();
    assert_eq!(report.triangles, 320);
    assert!(report.stages[3].skipped);
    assert_eq!(report.decimation_error, None);
}

#[test]
fn pipeline_rules_and_flips() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ship.obj");
    let mut text = Vec::new();
    export_obj(&flipped_cube(), &mut text).unwrap();
    let text = String::from_utf8(text).unwrap().replace("g default", "g Glazing_port");
    std::fs::write(&input, text).unwrap();
    let out = dir.path().join("ship.hdsc");
    let config = PipelineConfig::from_json(r#"{"rules": [{"pattern": "glaz", "transparent": true}]}"#).unwrap();
    let report = run_pipeline(&input, &out, &config).unwrap();
    assert_eq!(report.flipped_faces, 1);
    assert!(report.materials[0].transparent);
    let scene = read_scene(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(scene.groups[0].name, "Glazing_port");
    assert!(scene.materials[scene.groups[0].material as usize].transparent);
}

#[test]
fn corrupt_input_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.obj");
    std::fs::write(&input, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 x 3\n").unwrap();
    let out = dir.path().join("bad.hdsc");
    let err = run_pipeline(&input, &out, &PipelineConfig::default()).unwrap_err();
    assert!(matches!(err, MeshError::MalformedFace { line: 5, .. }), "{err}");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn unknown_config_keys_are_rejected() {
    assert!(PipelineConfig::from_json(r#"{"target_tris": 12}"#).is_err());
}

#[test]
fn large_file_parses_quickly_and_round_trips() {
    let m = hull(600, 751);
    assert_eq!(m.face_count(), 900_000);
    let mut first = Vec::new();
    export_obj(&m, &mut first).unwrap();
    let started = Instant::now();
    let parsed = parse_obj(first.as_slice()).unwrap().mesh;
    let took = started.elapsed();
    assert!(took.as_secs_f64() < 5.0, "parse took {took:?}");
    assert_eq!(parsed.face_count(), 900_000);
    let mut second = Vec::new();
    export_obj(&parsed, &mut second).unwrap();
    assert_eq!(Sha256::digest(&first), Sha256::digest(&second));
}

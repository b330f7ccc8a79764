//! HDSC: little-endian binary scene for the viewer.
//!
//! ```text
//! header   magic "HDSC", version u16, flags u16 (reserved, 0),
//!          vertex_count u32, index_count u32, material_count u32, group_count u32
//! vertices vertex_count × (position 3×f32, normal 3×f32, uv 2×f32)
//! indices  index_count × u32, three per triangle, counter-clockwise
//! materials name (u16 length + UTF-8), rgba 4×f32, transparent u8, roughness f32
//! groups   name (u16 length + UTF-8), first_index u32, index_count u32, material u32
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::materials::{MaterialSpec, MaterialTable};
use super::mesh::{area_vector, Corner, Mesh, NO_INDEX};
use super::MeshError;

pub const SCENE_MAGIC: &[u8; 4] = b"HDSC";
pub const SCENE_VERSION: u16 = 1;
const HEADER_LEN: usize = 24;
const VERTEX_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGroup {
    pub name: String,
    pub first_index: u32,
    pub index_count: u32,
    pub material: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub positions: Vec<[f32; 3]>,
    pub normals: Vec<[f32; 3]>,
    pub uvs: Vec<[f32; 2]>,
    pub indices: Vec<u32>,
    pub materials: Vec<MaterialSpec>,
    pub groups: Vec<SceneGroup>,
}

impl Scene {
    /// One vertex per distinct (position, texcoord, normal) corner. Corners
    /// without a normal get the area-weighted average of the faces around
    /// their position.
    pub fn from_mesh(mesh: &Mesh, table: &MaterialTable) -> Result<Self, MeshError> {
        if !mesh.is_triangulated() {
            return Err(MeshError::NotTriangulated);
        }
        let mut smooth = vec![[0.0f64; 3]; mesh.positions.len()];
        for f in 0..mesh.face_count() {
            let t = mesh.triangle(f);
            let n = area_vector(mesh.positions[t[0] as usize], mesh.positions[t[1] as usize], mesh.positions[t[2] as usize]);
            for v in t {
                for k in 0..3 {
                    smooth[v as usize][k] += n[k];
                }
            }
        }
        let mut scene = Scene {
            materials: table.materials.clone(),
            ..Scene::default()
        };
        let mut slot: HashMap<Corner, u32> = HashMap::new();
        let plain = !mesh.has_texcoords() && !mesh.has_normals();
        let mut plain_slot = vec![NO_INDEX; if plain { mesh.positions.len() } else { 0 }];
        for (g, group) in mesh.groups().iter().enumerate() {
            let first = scene.indices.len() as u32;
            for f in group.faces.clone() {
                for &c in mesh.face(f) {
                    let existing = if plain {
                        Some(plain_slot[c.v as usize]).filter(|&s| s != NO_INDEX)
                    } else {
                        slot.get(&c).copied()
                    };
                    let index = match existing {
                        Some(i) => i,
                        None => {
                            let i = scene.positions.len() as u32;
                            scene.push_vertex(mesh, c, &smooth);
                            if plain {
                                plain_slot[c.v as usize] = i;
                            } else {
                                slot.insert(c, i);
                            }
                            i
                        }
                    };
                    scene.indices.push(index);
                }
            }
            scene.groups.push(SceneGroup {
                name: group.name.clone(),
                first_index: first,
                index_count: scene.indices.len() as u32 - first,
                material: table.group_material.get(g).copied().unwrap_or(0),
            });
        }
        if scene.materials.is_empty() {
            scene.materials.push(MaterialSpec::neutral());
        }
        Ok(scene)
    }

    fn push_vertex(&mut self, mesh: &Mesh, c: Corner, smooth: &[[f64; 3]]) {
        self.positions.push(mesh.positions[c.v as usize].map(|x| x as f32));
        let n = if c.vn != NO_INDEX { mesh.normals[c.vn as usize] } else { smooth[c.v as usize] };
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        self.normals.push(if len > 0.0 { n.map(|x| (x / len) as f32) } else { [0.0; 3] });
        self.uvs.push(if c.vt != NO_INDEX { mesh.texcoords[c.vt as usize].map(|x| x as f32) } else { [0.0; 2] });
    }

    pub fn triangle_count(&self) -> usize {
        self.indices.len() / 3
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self.positions.len() * VERTEX_LEN
            + self.indices.len() * 4
            + self.materials.iter().map(|m| 2 + m.name.len() + 21).sum::<usize>()
            + self.groups.iter().map(|g| 2 + g.name.len() + 12).sum::<usize>()
    }
}

fn write_name(out: &mut impl Write, name: &str) -> std::io::Result<()> {
    let bytes = &name.as_bytes()[..name.len().min(u16::MAX as usize)];
    out.write_u16::<LE>(bytes.len() as u16)?;
    out.write_all(bytes)
}

pub fn write_scene(scene: &Scene, out: impl Write) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::with_capacity(1 << 16, out);
    out.write_all(SCENE_MAGIC)?;
    out.write_u16::<LE>(SCENE_VERSION)?;
    out.write_u16::<LE>(0)?;
    out.write_u32::<LE>(scene.positions.len() as u32)?;
    out.write_u32::<LE>(scene.indices.len() as u32)?;
    out.write_u32::<LE>(scene.materials.len() as u32)?;
    out.write_u32::<LE>(scene.groups.len() as u32)?;
    for i in 0..scene.positions.len() {
        for x in scene.positions[i].iter().chain(&scene.normals[i]).chain(&scene.uvs[i]) {
            out.write_f32::<LE>(*x)?;
        }
    }
    for &i in &scene.indices {
        out.write_u32::<LE>(i)?;
    }
    for m in &scene.materials {
        write_name(&mut out, &m.name)?;
        for c in m.base_color {
            out.write_f32::<LE>(c)?;
        }
        out.write_u8(m.transparent as u8)?;
        out.write_f32::<LE>(m.roughness)?;
    }
    for g in &scene.groups {
        write_name(&mut out, &g.name)?;
        out.write_u32::<LE>(g.first_index)?;
        out.write_u32::<LE>(g.index_count)?;
        out.write_u32::<LE>(g.material)?;
    }
    out.flush()
}

fn bad(what: impl Into<String>) -> MeshError {
    MeshError::BadScene(what.into())
}

fn read_name(input: &mut impl Read) -> Result<String, MeshError> {
    let len = input.read_u16::<LE>()? as usize;
    let mut bytes = vec![0; len];
    input.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|_| bad("name is not UTF-8"))
}

/// Reads and validates an HDSC scene: indices and group ranges must be in
/// bounds and materials must exist.
pub fn read_scene(input: impl Read) -> Result<Scene, MeshError> {
    let mut input = std::io::BufReader::new(input);
    let mut magic = [0; 4];
    input.read_exact(&mut magic)?;
    if &magic != SCENE_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = input.read_u16::<LE>()?;
    if version != SCENE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let _flags = input.read_u16::<LE>()?;
    let vertices = input.read_u32::<LE>()? as usize;
    let indices = input.read_u32::<LE>()? as usize;
    let materials = input.read_u32::<LE>()? as usize;
    let groups = input.read_u32::<LE>()? as usize;
    if indices % 3 != 0 {
        return Err(bad("index count is not a multiple of 3"));
    }
    let mut scene = Scene::default();
    // Counts come from the file; grow as data actually arrives.
    for _ in 0..vertices {
        let mut v = [0f32; 8];
        input.read_f32_into::<LE>(&mut v)?;
        scene.positions.push([v[0], v[1], v[2]]);
        scene.normals.push([v[3], v[4], v[5]]);
        scene.uvs.push([v[6], v[7]]);
    }
    for _ in 0..indices {
        let i = input.read_u32::<LE>()?;
        if i as usize >= vertices {
            return Err(bad(format!("index {i} out of range")));
        }
        scene.indices.push(i);
    }
    for _ in 0..materials {
        let name = read_name(&mut input)?;
        let mut base_color = [0f32; 4];
        input.read_f32_into::<LE>(&mut base_color)?;
        let transparent = input.read_u8()? != 0;
        let roughness = input.read_f32::<LE>()?;
        scene.materials.push(MaterialSpec {
            name,
            base_color,
            transparent,
            roughness,
        });
    }
    for _ in 0..groups {
        let name = read_name(&mut input)?;
        let first_index = input.read_u32::<LE>()?;
        let index_count = input.read_u32::<LE>()?;
        let material = input.read_u32::<LE>()?;
        if first_index as usize + index_count as usize > indices || material as usize >= materials {
            return Err(bad(format!("group '{name}' out of range")));
        }
        scene.groups.push(SceneGroup {
            name,
            first_index,
            index_count,
            material,
        });
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshline::shapes::cube;
    use crate::meshline::{assign_default_materials, parse_obj};

    #[test]
    fn cube_round_trip_and_layout() {
        let mesh = cube(2.0);
        let table = assign_default_materials(&mesh, &[], &[]).unwrap();
        let scene = Scene::from_mesh(&mesh, &table).unwrap();
        assert_eq!(scene.positions.len(), 8);
        assert_eq!(scene.triangle_count(), 12);
        let mut bytes = Vec::new();
        write_scene(&scene, &mut bytes).unwrap();
        assert_eq!(bytes.len(), scene.encoded_len());
        assert_eq!(&bytes[..4], b"HDSC");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), SCENE_VERSION);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 36);
        assert_eq!(read_scene(bytes.as_slice()).unwrap(), scene);
        // Smooth normals at a cube corner point along the diagonal.
        let n = scene.normals[0];
        assert!((n[0] + 1.0 / 3f32.sqrt()).abs() < 1e-6 && (n[1] - n[0]).abs() < 1e-6);
    }

    #[test]
    fn corners_with_attributes_split_vertices() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvn 0 0 -1\nf 1//1 2//1 3//1\nf 1//2 3//2 2//2\n".as_bytes())
            .unwrap()
            .mesh;
        let table = assign_default_materials(&m, &[], &[]).unwrap();
        let scene = Scene::from_mesh(&m, &table).unwrap();
        assert_eq!(scene.positions.len(), 6);
        assert_eq!(scene.normals[3], [0.0, 0.0, -1.0]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mesh = cube(1.0);
        let scene = Scene::from_mesh(&mesh, &assign_default_materials(&mesh, &[], &[]).unwrap()).unwrap();
        let mut bytes = Vec::new();
        write_scene(&scene, &mut bytes).unwrap();
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(read_scene(wrong.as_slice()), Err(MeshError::BadScene(_))));
        let index_at = HEADER_LEN + 8 * VERTEX_LEN;
        let mut wrong = bytes.clone();
        wrong[index_at..index_at + 4].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(read_scene(wrong.as_slice()), Err(MeshError::BadScene(_))));
        assert!(read_scene(&bytes[..bytes.len() - 1]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(read_scene(longer.as_slice()), Err(MeshError::BadScene(_))));
    }
}

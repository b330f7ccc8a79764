use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::mesh::{Corner, Mesh, NO_INDEX};
use super::MeshError;

#[derive(Debug, Clone, Default)]
pub struct ParsedObj {
    pub mesh: Mesh,
    pub warnings: Vec<String>,
}

/// Parses Wavefront OBJ. Supports `v`, `vt`, `vn`, `f` with all four corner
/// forms and negative indices, `g`, `o`, `usemtl`, `mtllib` and comments.
/// Unknown directives and dropped degenerate faces become warnings.
pub fn parse_obj(reader: impl BufRead) -> Result<ParsedObj, MeshError> {
    let mut mesh = Mesh::new();
    let mut warnings = Vec::new();
    let mut unknown: BTreeMap<String, (u64, usize)> = BTreeMap::new();
    let mut degenerate = 0usize;
    let mut group = String::from("default");
    let mut material: Option<String> = None;
    let mut corners: Vec<Corner> = Vec::with_capacity(8);
    let mut reader = reader;
    let mut line = String::new();
    let mut line_no = 0u64;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let mut parts = text.split_ascii_whitespace();
        let directive = parts.next().unwrap_or("");
        match directive {
            "v" => mesh.positions.push(floats::<3>(&mut parts, line_no, "v")?),
            "vn" => mesh.normals.push(floats::<3>(&mut parts, line_no, "vn")?),
            "vt" => {
                let u = number(parts.next(), line_no, "vt")?;
                let v = match parts.next() {
                    Some(t) => number(Some(t), line_no, "vt")?,
                    None => 0.0,
                };
                mesh.texcoords.push([u, v]);
            }
            "f" => {
                corners.clear();
                for token in parts {
                    corners.push(corner(token, &mesh, line_no)?);
                }
                if corners.len() < 3 {
                    return Err(MeshError::MalformedFace {
                        line: line_no,
                        reason: format!("{} corners, need at least 3", corners.len()),
                    });
                }
                dedup_positions(&mut corners);
                if corners.len() < 3 {
                    degenerate += 1;
                    continue;
                }
                mesh.push_face(&corners);
            }
            "g" | "o" => {
                let name = parts.collect::<Vec<_>>().join(" ");
                group = if name.is_empty() { "default".to_string() } else { name };
                mesh.begin_group(&group, material.as_deref());
            }
            "usemtl" => {
                material = Some(parts.collect::<Vec<_>>().join(" "));
                mesh.begin_group(&group, material.as_deref());
            }
            "mtllib" => mesh.material_libs.extend(parts.map(str::to_string)),
            // Smoothing groups carry no geometry.
            "s" => {}
            other => {
                let entry = unknown.entry(other.to_string()).or_insert((line_no, 0));
                entry.1 += 1;
            }
        }
    }
    for (directive, (first, count)) in unknown {
        warnings.push(format!("line {first}: unsupported directive '{directive}' ignored ({count} occurrences)"));
    }
    if degenerate > 0 {
        warnings.push(format!("{degenerate} faces with fewer than 3 distinct vertices dropped"));
    }
    mesh.source = mesh.stats();
    Ok(ParsedObj { mesh, warnings })
}

pub fn read_obj(path: &Path) -> Result<ParsedObj, MeshError> {
    parse_obj(BufReader::with_capacity(1 << 16, File::open(path)?))
}

fn number(token: Option<&str>, line: u64, directive: &str) -> Result<f64, MeshError> {
    token
        .and_then(|t| t.parse::<f64>().ok())
        .filter(|x| x.is_finite())
        .ok_or_else(|| MeshError::MalformedRecord {
            line,
            directive: directive.to_string(),
        })
}

fn floats<'a, const N: usize>(
    parts: &mut impl Iterator<Item = &'a str>,
    line: u64,
    directive: &str,
) -> Result<[f64; N], MeshError> {
    let mut out = [0.0; N];
    for x in &mut out {
        *x = number(parts.next(), line, directive)?;
    }
    Ok(out)
}

/// Resolves a 1-based or negative (relative) OBJ index against `count`
/// elements read so far.
fn resolve(raw: &str, count: usize, line: u64) -> Result<u32, MeshError> {
    let i: i64 = raw.parse().map_err(|_| MeshError::MalformedFace {
        line,
        reason: format!("bad index '{raw}'"),
    })?;
    let resolved = if i > 0 { i - 1 } else { count as i64 + i };
    if i == 0 || resolved < 0 || resolved >= count as i64 {
        return Err(MeshError::IndexOutOfRange { line, index: i });
    }
    Ok(resolved as u32)
}

fn corner(token: &str, mesh: &Mesh, line: u64) -> Result<Corner, MeshError> {
    let mut fields = token.split('/');
    let v = resolve(fields.next().unwrap_or(""), mesh.positions.len(), line)?;
    let vt = match fields.next() {
        None | Some("") => NO_INDEX,
        Some(t) => resolve(t, mesh.texcoords.len(), line)?,
    };
    let vn = match fields.next() {
        None | Some("") => NO_INDEX,
        Some(t) => resolve(t, mesh.normals.len(), line)?,
    };
    if fields.next().is_some() {
        return Err(MeshError::MalformedFace {
            line,
            reason: format!("bad corner '{token}'"),
        });
    }
    Ok(Corner { v, vt, vn })
}

/// Keeps the first corner for each position.
fn dedup_positions(corners: &mut Vec<Corner>) {
    let mut i = 1;
    while i < corners.len() {
        let v = corners[i].v;
        if corners[..i].iter().any(|c| c.v == v) {
            corners.remove(i);
        } else {
            i += 1;
        }
    }
}

/// Writes OBJ that [`parse_obj`] reads back to the same mesh. Coordinates
/// use the shortest decimal form that round-trips exactly.
pub fn export_obj(mesh: &Mesh, out: impl Write) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::with_capacity(1 << 16, out);
    for lib in &mesh.material_libs {
        writeln!(out, "mtllib {lib}")?;
    }
    for p in &mesh.positions {
        writeln!(out, "v {} {} {}", p[0], p[1], p[2])?;
    }
    for t in &mesh.texcoords {
        writeln!(out, "vt {} {}", t[0], t[1])?;
    }
    for n in &mesh.normals {
        writeln!(out, "vn {} {} {}", n[0], n[1], n[2])?;
    }
    let mut material: Option<&str> = None;
    for group in mesh.groups() {
        if group.faces.is_empty() {
            continue;
        }
        writeln!(out, "g {}", group.name)?;
        if let Some(m) = group.material.as_deref() {
            if material != Some(m) {
                writeln!(out, "usemtl {m}")?;
                material = Some(m);
            }
        }
        for f in group.faces.clone() {
            out.write_all(b"f")?;
            for c in mesh.face(f) {
                match (c.vt != NO_INDEX, c.vn != NO_INDEX) {
                    (false, false) => write!(out, " {}", c.v + 1)?,
                    (true, false) => write!(out, " {}/{}", c.v + 1, c.vt + 1)?,
                    (false, true) => write!(out, " {}//{}", c.v + 1, c.vn + 1)?,
                    (true, true) => write!(out, " {}/{}/{}", c.v + 1, c.vt + 1, c.vn + 1)?,
                }
            }
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ParsedObj, MeshError> {
        parse_obj(text.as_bytes())
    }

    #[test]
    fn minimal_triangle() {
        let p = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(p.mesh.positions.len(), 3);
        assert_eq!(p.mesh.face_count(), 1);
        assert_eq!(p.mesh.triangle(0), [0, 1, 2]);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn negative_indices_are_relative() {
        let p = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(p.mesh.triangle(0), [0, 1, 2]);
    }

    #[test]
    fn all_corner_forms() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 1\n\
                    f 1 2 3\nf 1/1 2/2 3/3\nf 1//1 2//1 3//1\nf 2/2/1 4/3/1 3/1/1\n";
        let m = parse(text).unwrap().mesh;
        assert_eq!(m.face_count(), 4);
        assert_eq!(m.face(0)[0], Corner::at(0));
        assert_eq!(m.face(1)[2], Corner { v: 2, vt: 2, vn: NO_INDEX });
        assert_eq!(m.face(2)[1], Corner { v: 1, vt: NO_INDEX, vn: 0 });
        assert_eq!(m.face(3)[1], Corner { v: 3, vt: 2, vn: 0 });
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("v 0 0 0\nv 1 0 0\n\nf 1 2\n").unwrap_err();
        assert!(matches!(e, MeshError::MalformedFace { line: 4, .. }), "{e}");
        let e = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n").unwrap_err();
        assert!(matches!(e, MeshError::IndexOutOfRange { line: 4, index: 4 }), "{e}");
        let e = parse("v 0 0 0\nf 0 1 1\n").unwrap_err();
        assert!(matches!(e, MeshError::IndexOutOfRange { line: 2, index: 0 }), "{e}");
        let e = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n").unwrap_err();
        assert!(matches!(e, MeshError::MalformedFace { line: 4, .. }), "{e}");
        let e = parse("v 0 zero 0\n").unwrap_err();
        assert!(matches!(e, MeshError::MalformedRecord { line: 1, .. }), "{e}");
    }

    #[test]
    fn unknown_directives_warn() {
        let p = parse("cstype bezier\nv 0 0 0\nv 1 0 0\nv 0 1 0\nl 1 2\nl 2 3\nf 1 2 3\n").unwrap();
        assert_eq!(p.mesh.face_count(), 1);
        assert_eq!(p.warnings.len(), 2);
        assert!(p.warnings.iter().any(|w| w.contains("'l'") && w.contains("2 occurrences")));
    }

    #[test]
    fn repeated_vertices_are_removed() {
        let p = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 2 3\nf 1 1 2\n").unwrap();
        assert_eq!(p.mesh.face_count(), 1);
        assert_eq!(p.mesh.triangle(0), [0, 1, 2]);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn groups_and_materials() {
        let text = "mtllib a.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\n\
                    f 1 2 3\ng Hull\nusemtl steel\nf 2 4 3\ng Glazing_port\nf 1 2 4\nusemtl glass\nf 1 4 3\n";
        let m = parse(text).unwrap().mesh;
        let g: Vec<_> = m.groups().iter().map(|g| (g.name.as_str(), g.material.as_deref(), g.faces.clone())).collect();
        assert_eq!(
            g,
            vec![
                ("default", None, 0..1),
                ("Hull", Some("steel"), 1..2),
                ("Glazing_port", Some("steel"), 2..3),
                ("Glazing_port", Some("glass"), 3..4),
            ]
        );
        assert_eq!(m.material_libs, vec!["a.mtl"]);
    }

    #[test]
    fn export_round_trips() {
        let text = "v 0.1 -2.5 3e-7\nv 1 0 0\nv 0 1 0\nv 1 1 0.3333333333333333\nvt 0.5 0.25\nvn 0 0 1\n\
                    g a\nusemtl m\nf 1/1/1 2/1/1 3/1/1\ng b\nf 2 4 3 1\n";
        let m = parse(text).unwrap().mesh;
        let mut buf = Vec::new();
        export_obj(&m, &mut buf).unwrap();
        let back = parse_obj(buf.as_slice()).unwrap().mesh;
        assert_eq!(back, m);
    }
}

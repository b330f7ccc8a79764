use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use super::MeshError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub name: String,
    /// Linear RGBA, each in [0, 1].
    pub base_color: [f32; 4],
    pub transparent: bool,
    pub roughness: f32,
}

impl MaterialSpec {
    /// Light grey, opaque, fairly rough.
    pub fn neutral() -> Self {
        Self {
            name: "default".to_string(),
            base_color: [0.8, 0.8, 0.8, 1.0],
            transparent: false,
            roughness: 0.6,
        }
    }

    fn validate(&self) -> Result<(), MeshError> {
        if self.base_color.iter().chain([&self.roughness]).any(|c| !(0.0..=1.0).contains(c)) {
            return Err(MeshError::Config(format!(
                "material '{}': colour and roughness must lie in [0, 1]",
                self.name
            )));
        }
        Ok(())
    }
}

/// Maps groups whose name contains `pattern` (case-insensitive) to a
/// material. Unset fields fall back to the neutral default; transparent
/// rules default to alpha 0.35.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialRule {
    pub pattern: String,
    /// Material name; defaults to the pattern.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub base_color: Option<[f32; 4]>,
    #[serde(default)]
    pub transparent: bool,
    #[serde(default)]
    pub roughness: Option<f32>,
}

impl MaterialRule {
    fn matches(&self, group: &str) -> bool {
        group.to_lowercase().contains(&self.pattern.to_lowercase())
    }

    fn spec(&self) -> MaterialSpec {
        let neutral = MaterialSpec::neutral();
        let mut color = self.base_color.unwrap_or(neutral.base_color);
        if self.transparent && self.base_color.is_none() {
            color[3] = 0.35;
        }
        MaterialSpec {
            name: self.name.clone().unwrap_or_else(|| self.pattern.clone()),
            base_color: color,
            transparent: self.transparent,
            roughness: self.roughness.unwrap_or(neutral.roughness),
        }
    }
}

/// Distinct materials plus the index each group uses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaterialTable {
    pub materials: Vec<MaterialSpec>,
    pub group_material: Vec<u32>,
}

/// The first matching rule wins. Groups no rule matches use their `usemtl`
/// material from `library` when present, otherwise the neutral default.
pub fn assign_default_materials(
    mesh: &Mesh,
    rules: &[MaterialRule],
    library: &[MaterialSpec],
) -> Result<MaterialTable, MeshError> {
    let mut table = MaterialTable {
        materials: Vec::new(),
        group_material: Vec::with_capacity(mesh.groups().len()),
    };
    for group in mesh.groups() {
        let spec = match rules.iter().find(|r| r.matches(&group.name)) {
            Some(rule) => rule.spec(),
            None => group
                .material
                .as_deref()
                .and_then(|m| library.iter().find(|s| s.name == m))
                .cloned()
                .unwrap_or_else(MaterialSpec::neutral),
        };
        spec.validate()?;
        let index = match table.materials.iter().position(|m| *m == spec) {
            Some(i) => i,
            None => {
                table.materials.push(spec);
                table.materials.len() - 1
            }
        };
        table.group_material.push(index as u32);
    }
    Ok(table)
}

/// Reads `newmtl`, `Kd`, `d`/`Tr` and `Ns` from MTL text; everything else is
/// ignored. Shininess maps to roughness as sqrt(2 / (Ns + 2)).
pub fn parse_mtl(text: &str) -> Vec<MaterialSpec> {
    let mut out: Vec<MaterialSpec> = Vec::new();
    for line in text.lines() {
        let mut parts = line.split('#').next().unwrap_or("").split_ascii_whitespace();
        let Some(directive) = parts.next() else {
            continue;
        };
        let nums: Vec<f32> = parts.clone().filter_map(|t| t.parse().ok()).collect();
        if directive == "newmtl" {
            out.push(MaterialSpec {
                name: parts.collect::<Vec<_>>().join(" "),
                ..MaterialSpec::neutral()
            });
            continue;
        }
        let Some(m) = out.last_mut() else {
            continue;
        };
        match (directive, nums.as_slice()) {
            ("Kd", [r, g, b, ..]) => {
                m.base_color[..3].copy_from_slice(&[*r, *g, *b].map(|c| c.clamp(0.0, 1.0)));
            }
            ("d", [d, ..]) => m.base_color[3] = d.clamp(0.0, 1.0),
            ("Tr", [t, ..]) => m.base_color[3] = (1.0 - t).clamp(0.0, 1.0),
            ("Ns", [ns, ..]) => m.roughness = (2.0 / (ns.max(0.0) + 2.0)).sqrt(),
            _ => {}
        }
        m.transparent = m.base_color[3] < 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshline::parse_obj;

    fn groups(names: &[&str]) -> Mesh {
        let mut text = String::from("v 0 0 0\nv 1 0 0\nv 0 1 0\n");
        for n in names {
            text.push_str(&format!("g {n}\nf 1 2 3\n"));
        }
        parse_obj(text.as_bytes()).unwrap().mesh
    }

    fn rule(pattern: &str, transparent: bool, name: &str) -> MaterialRule {
        MaterialRule {
            pattern: pattern.into(),
            name: Some(name.into()),
            base_color: None,
            transparent,
            roughness: None,
        }
    }

    #[test]
    fn glazing_becomes_transparent() {
        let t = assign_default_materials(&groups(&["Glazing_port", "Hull"]), &[rule("glaz", true, "glass")], &[]).unwrap();
        let m = &t.materials[t.group_material[0] as usize];
        assert!(m.transparent);
        assert_eq!(m.name, "glass");
        assert_eq!(t.materials[t.group_material[1] as usize], MaterialSpec::neutral());
    }

    #[test]
    fn no_rules_all_neutral() {
        let t = assign_default_materials(&groups(&["a", "b", "c"]), &[], &[]).unwrap();
        assert_eq!(t.materials, vec![MaterialSpec::neutral()]);
        assert_eq!(t.group_material, vec![0, 0, 0]);
    }

    #[test]
    fn first_rule_wins() {
        let rules = [rule("port", false, "first"), rule("glaz", true, "second")];
        let t = assign_default_materials(&groups(&["Glazing_port"]), &rules, &[]).unwrap();
        assert_eq!(t.materials[0].name, "first");
    }

    #[test]
    fn out_of_range_colour_rejected() {
        let mut r = rule("a", false, "x");
        r.base_color = Some([1.5, 0.0, 0.0, 1.0]);
        assert!(matches!(assign_default_materials(&groups(&["a"]), &[r], &[]), Err(MeshError::Config(_))));
    }

    #[test]
    fn mtl_library_used_when_no_rule_matches() {
        let lib = parse_mtl("newmtl steel\nKd 0.2 0.3 0.4\nNs 98\nnewmtl glass\nKd 1 1 1\nd 0.25\n");
        assert_eq!(lib.len(), 2);
        assert_eq!(lib[0].base_color, [0.2, 0.3, 0.4, 1.0]);
        assert!((lib[0].roughness - (2.0f32 / 100.0).sqrt()).abs() < 1e-6);
        assert!(lib[1].transparent);
        let mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nusemtl glass\nf 1 2 3\n".as_bytes()).unwrap().mesh;
        let t = assign_default_materials(&mesh, &[], &lib).unwrap();
        assert_eq!(t.materials[0].name, "glass");
    }
}

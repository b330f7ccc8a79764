use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::decimate::{decimate, DecimateOptions};
use super::materials::{assign_default_materials, parse_mtl, MaterialRule, MaterialSpec};
use super::mesh::{Mesh, SourceStats};
use super::obj::{export_obj, read_obj};
use super::repair::repair_normals;
use super::scene::{write_scene, Scene};
use super::triangulate::triangulate;
use super::MeshError;

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Decimation target; decimation is skipped when unset.
    #[serde(default)]
    pub target_triangles: Option<usize>,
    #[serde(default = "yes")]
    pub triangulate: bool,
    #[serde(default = "yes")]
    pub repair: bool,
    #[serde(default = "yes")]
    pub decimate: bool,
    #[serde(default = "yes")]
    pub materials: bool,
    /// Also write `<output>.obj` next to the scene.
    #[serde(default = "yes")]
    pub export_obj: bool,
    #[serde(default)]
    pub rules: Vec<MaterialRule>,
    #[serde(default)]
    pub decimate_options: DecimateOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, MeshError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub skipped: bool,
    pub faces_in: usize,
    pub faces_out: usize,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub input: PathBuf,
    pub scene: PathBuf,
    pub obj: Option<PathBuf>,
    pub source: SourceStats,
    pub stages: Vec<StageReport>,
    pub concave_polygons: usize,
    pub flipped_faces: usize,
    pub non_manifold_edges: usize,
    pub decimation_error: Option<f64>,
    pub triangles: usize,
    pub vertices: usize,
    pub materials: Vec<MaterialSpec>,
    pub warnings: Vec<String>,
}

/// Runs parse, triangulate, repair, decimate, materials and export. Output
/// files are written to a temporary name and renamed into place, so a failed
/// run leaves no partial scene behind.
pub fn run_pipeline(input: &Path, output: &Path, config: &PipelineConfig) -> Result<PipelineReport, MeshError> {
    let started = Instant::now();
    let parsed = read_obj(input)?;
    let mut mesh = parsed.mesh;
    let mut report = PipelineReport {
        input: input.to_path_buf(),
        scene: output.to_path_buf(),
        obj: None,
        source: mesh.source,
        stages: Vec::new(),
        concave_polygons: 0,
        flipped_faces: 0,
        non_manifold_edges: 0,
        decimation_error: None,
        triangles: 0,
        vertices: 0,
        materials: Vec::new(),
        warnings: parsed.warnings,
    };
    report.stage("parse", false, mesh.source.faces, mesh.face_count(), started);

    let t = Instant::now();
    let faces_in = mesh.face_count();
    if config.triangulate {
        let out = triangulate(&mesh);
        report.concave_polygons = out.concave;
        report.warnings.extend(out.warnings);
        mesh = out.mesh;
    }
    report.stage("triangulate", !config.triangulate, faces_in, mesh.face_count(), t);

    let t = Instant::now();
    if config.repair {
        let out = repair_normals(&mesh)?;
        report.flipped_faces = out.flipped;
        report.non_manifold_edges = out.non_manifold_edges;
        report.warnings.extend(out.warnings);
        mesh = out.mesh;
    }
    report.stage("repair", !config.repair, mesh.face_count(), mesh.face_count(), t);

    let t = Instant::now();
    let faces_in = mesh.face_count();
    let target = config.target_triangles.filter(|_| config.decimate);
    if config.decimate && target.is_none() {
        report.warnings.push("decimation skipped: no target_triangles".to_string());
    }
    if let Some(target) = target {
        let out = decimate(&mesh, target, &config.decimate_options)?;
        report.decimation_error = Some(out.error);
        report.warnings.extend(out.warnings);
        mesh = out.mesh;
    }
    report.stage("decimate", target.is_none(), faces_in, mesh.face_count(), t);

    let t = Instant::now();
    let library = if config.materials { load_libraries(&mesh, input, &mut report.warnings) } else { Vec::new() };
    let rules: &[MaterialRule] = if config.materials { &config.rules } else { &[] };
    let table = assign_default_materials(&mesh, rules, &library)?;
    report.stage("materials", !config.materials, mesh.face_count(), mesh.face_count(), t);

    let t = Instant::now();
    let scene = Scene::from_mesh(&mesh, &table)?;
    let obj_path = config.export_obj.then(|| output.with_extension("obj"));
    if let Some(path) = &obj_path {
        write_atomic(path, |f| export_obj(&mesh, f))?;
    }
    write_atomic(output, |f| write_scene(&scene, f))?;
    report.obj = obj_path;
    report.triangles = scene.triangle_count();
    report.vertices = scene.positions.len();
    report.materials = scene.materials;
    report.stage("export", false, mesh.face_count(), report.triangles, t);
    Ok(report)
}

impl PipelineReport {
    fn stage(&mut self, name: &str, skipped: bool, faces_in: usize, faces_out: usize, since: Instant) {
        self.stages.push(StageReport {
            stage: name.to_string(),
            skipped,
            faces_in,
            faces_out,
            millis: since.elapsed().as_secs_f64() * 1e3,
        });
    }
}

fn load_libraries(mesh: &Mesh, input: &Path, warnings: &mut Vec<String>) -> Vec<MaterialSpec> {
    let dir = input.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for lib in &mesh.material_libs {
        match std::fs::read_to_string(dir.join(lib)) {
            Ok(text) => out.extend(parse_mtl(&text)),
            Err(e) => warnings.push(format!("material library '{lib}' not loaded: {e}")),
        }
    }
    out
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut File) -> std::io::Result<()>) -> Result<(), MeshError> {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".part{}", std::process::id()));
    let tmp = path.with_file_name(name);
    let result = File::create(&tmp).and_then(|mut f| {
        write(&mut f)?;
        f.flush()?;
        f.sync_all()
    });
    match result.and_then(|_| std::fs::rename(&tmp, path)) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e.into())
        }
    }
}

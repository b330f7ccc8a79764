//! CAD-to-realtime mesh pipeline: OBJ in, triangulate, repair winding,
//! decimate, assign materials, OBJ and HDSC out.

mod decimate;
mod materials;
mod mesh;
mod obj;
mod pipeline;
mod repair;
mod scene;
pub mod shapes;
mod surface;
mod triangulate;

use thiserror::Error;

pub use decimate::{decimate, DecimateOptions, Decimation};
pub use materials::{assign_default_materials, parse_mtl, MaterialRule, MaterialSpec, MaterialTable};
pub use mesh::{signed_volume, Corner, Group, Mesh, SourceStats, NO_INDEX};
pub use obj::{export_obj, parse_obj, read_obj, ParsedObj};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineReport, StageReport};
pub use repair::{repair_normals, Repair};
pub use scene::{read_scene, write_scene, Scene, SceneGroup, SCENE_MAGIC, SCENE_VERSION};
pub use surface::SurfaceDistance;
pub use triangulate::{triangulate, Triangulation};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: malformed face: {reason}")]
    MalformedFace { line: u64, reason: String },
    #[error("line {line}: malformed {directive} record")]
    MalformedRecord { line: u64, directive: String },
    #[error("line {line}: index {index} out of range")]
    IndexOutOfRange { line: u64, index: i64 },
    #[error("component containing face {face} cannot be consistently wound")]
    NonOrientable { face: usize },
    #[error("mesh must be triangulated first")]
    NotTriangulated,
    #[error("edge {a}-{b} is traversed twice in the same direction")]
    InconsistentWinding { a: u32, b: u32 },
    #[error("target of {target} triangles is below the minimum {minimum}")]
    TargetTooSmall { target: usize, minimum: usize },
    #[error("decimation stalled at {reached} triangles, target {target}")]
    TargetUnreachable { target: usize, reached: usize },
    #[error("scene file: {0}")]
    BadScene(String),
    #[error("config: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use holodeck_core::meshline::{read_scene, Scene};
use holodeck_core::neurocube::{load_dataset, NetworkDataset, SpatialIndex};
use holodeck_core::posecast::monotonic_ns;
use holodeck_core::tracking::{load_constellations, ConstellationFile, TrackerConfig};
use parking_lot::RwLock;
use serde::Serialize;

use crate::config::ServiceConfig;
use crate::relay::PoseRelay;
use crate::session::Session;
use crate::ServeError;

/// Monotonic nanosecond clock; swapped for a manual one in tests.
pub type Now = Arc<dyn Fn() -> u64 + Send + Sync>;

pub struct DatasetEntry {
    pub id: String,
    pub dataset: NetworkDataset,
    pub index: SpatialIndex,
}

impl DatasetEntry {
    pub fn new(dataset: NetworkDataset) -> Self {
        let index = SpatialIndex::build(&dataset);
        Self {
            id: dataset.name.clone(),
            dataset,
            index,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SceneSummary {
    pub id: String,
    pub vertices: usize,
    pub triangles: usize,
    pub bytes: usize,
    pub materials: Vec<String>,
    pub groups: Vec<String>,
}

pub struct SceneEntry {
    pub summary: SceneSummary,
    /// The HDSC file as stored, served verbatim.
    pub bytes: Arc<Vec<u8>>,
}

impl SceneEntry {
    pub fn load(path: &Path) -> Result<Self, ServeError> {
        let bytes = std::fs::read(path).map_err(|e| ServeError::Load(format!("{}: {e}", path.display())))?;
        let scene: Scene = read_scene(bytes.as_slice()).map_err(|e| ServeError::Load(format!("{}: {e}", path.display())))?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Self {
            summary: SceneSummary {
                id,
                vertices: scene.positions.len(),
                triangles: scene.triangle_count(),
                bytes: bytes.len(),
                materials: scene.materials.iter().map(|m| m.name.clone()).collect(),
                groups: scene.groups.iter().map(|g| g.name.clone()).collect(),
            },
            bytes: Arc::new(bytes),
        })
    }
}

/// Everything the handlers share. Datasets, scenes and bodies are fixed
/// after construction; sessions come and go.
pub struct AppState {
    pub config: ServiceConfig,
    pub datasets: Vec<Arc<DatasetEntry>>,
    pub scenes: Vec<SceneEntry>,
    pub bodies: ConstellationFile,
    pub sessions: RwLock<HashMap<String, Arc<Session>>>,
    pub relay: Option<PoseRelay>,
    pub now: Now,
    next_session: AtomicU64,
}

impl AppState {
    pub fn new(config: ServiceConfig, datasets: Vec<NetworkDataset>, scenes: Vec<SceneEntry>, now: Now) -> Result<Self, ServeError> {
        let mut entries: Vec<Arc<DatasetEntry>> = Vec::with_capacity(datasets.len());
        for d in datasets {
            if entries.iter().any(|e| e.id == d.name) {
                return Err(ServeError::Load(format!("two datasets are named '{}'", d.name)));
            }
            entries.push(Arc::new(DatasetEntry::new(d)));
        }
        if let Some(dup) = scenes.iter().enumerate().find(|(i, s)| scenes[..*i].iter().any(|o| o.summary.id == s.summary.id)) {
            return Err(ServeError::Load(format!("two scenes are named '{}'", dup.1.summary.id)));
        }
        Ok(Self {
            config,
            datasets: entries,
            scenes,
            bodies: ConstellationFile::default(),
            sessions: RwLock::new(HashMap::new()),
            relay: None,
            now,
            next_session: AtomicU64::new(1),
        })
    }

    /// Loads everything the config names and starts the pose relay.
    pub fn from_config(config: ServiceConfig) -> Result<Self, ServeError> {
        let datasets = config
            .datasets
            .iter()
            .map(|p| load_dataset(p).map_err(|e| ServeError::Load(format!("{}: {e}", p.display()))))
            .collect::<Result<Vec<_>, _>>()?;
        for d in &datasets {
            for w in d.warnings() {
                log::warn!("dataset {}: {w}", d.name);
            }
        }
        let scenes = config.scenes.iter().map(|p| SceneEntry::load(p)).collect::<Result<Vec<_>, _>>()?;
        let bodies = match &config.constellations {
            Some(p) => ConstellationFile::from_constellations(
                &load_constellations(p, TrackerConfig::default().signature_separation)
                    .map_err(|e| ServeError::Load(format!("{}: {e}", p.display())))?,
            ),
            None => ConstellationFile::default(),
        };
        let relay = match config.pose_port {
            0 => None,
            port => Some(PoseRelay::start(port, config.pose_time_server, config.latency_budget_ns)?),
        };
        let mut state = Self::new(config, datasets, scenes, Arc::new(monotonic_ns))?;
        state.bodies = bodies;
        state.relay = relay;
        Ok(state)
    }

    pub fn dataset(&self, id: &str) -> Option<&Arc<DatasetEntry>> {
        self.datasets.iter().find(|d| d.id == id)
    }

    pub fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().get(id).cloned()
    }

    pub fn create_session(&self, dataset: Arc<DatasetEntry>, budget: holodeck_core::lod::FrameBudget) -> Arc<Session> {
        let id = format!("s{}", self.next_session.fetch_add(1, Ordering::Relaxed));
        let session = Arc::new(Session::new(
            id.clone(),
            dataset,
            budget,
            self.config.controller,
            self.config.telemetry_capacity,
            (self.now)(),
        ));
        self.sessions.write().insert(id, session.clone());
        session
    }

    pub fn remove_session(&self, id: &str) -> bool {
        self.sessions.write().remove(id).is_some()
    }

    /// Drops sessions idle for longer than the grace period; returns their ids.
    pub fn reap(&self) -> Vec<String> {
        let now = (self.now)();
        let grace = (self.config.session_grace_s * 1e9) as u64;
        let mut sessions = self.sessions.write();
        let gone: Vec<String> = sessions.values().filter(|s| s.expired(now, grace)).map(|s| s.id.clone()).collect();
        for id in &gone {
            sessions.remove(id);
        }
        gone
    }
}

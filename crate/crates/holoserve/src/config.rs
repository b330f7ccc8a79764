use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use holodeck_core::lod::{ControllerConfig, FrameBudget, Placement};
use holodeck_core::posecast::{DEFAULT_BUDGET_NS, DEFAULT_PORT};
use serde::{Deserialize, Serialize};

use crate::ServeError;

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "HOLODECK_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// UDP port the service subscribes to for pose frames; 0 disables the relay.
    pub pose_port: u16,
    /// Time server of the pose publisher, for clock-offset estimation.
    pub pose_time_server: Option<SocketAddr>,
    /// Dataset manifests. Relative paths resolve against the config file.
    pub datasets: Vec<PathBuf>,
    /// HDSC scene files.
    pub scenes: Vec<PathBuf>,
    pub constellations: Option<PathBuf>,
    pub latency_budget_ns: u64,
    pub session_grace_s: f64,
    pub telemetry_capacity: usize,
    pub spike_interval_ms: u64,
    pub draw_interval_ms: u64,
    pub placement: Placement,
    pub budget: FrameBudget,
    pub controller: ControllerConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            pose_port: DEFAULT_PORT,
            pose_time_server: None,
            datasets: Vec::new(),
            scenes: Vec::new(),
            constellations: None,
            latency_budget_ns: DEFAULT_BUDGET_NS,
            session_grace_s: 60.0,
            telemetry_capacity: 512,
            spike_interval_ms: 50,
            draw_interval_ms: 50,
            placement: Placement::default(),
            budget: FrameBudget::default(),
            controller: ControllerConfig::default(),
        }
    }
}

impl ServiceConfig {
    /// Parses and validates a config file; relative paths in it are made
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ServeError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServeError::Config(format!("{}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut config: ServiceConfig =
            serde_path_to_error::deserialize(de).map_err(|e| ServeError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in config.datasets.iter_mut().chain(config.scenes.iter_mut()).chain(config.constellations.as_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ServeError> {
        let bad = |m: &str| Err(ServeError::Config(m.to_string()));
        if self.pose_port != 0 && self.pose_port == self.listen.port() {
            return bad("pose_port must differ from the listen port");
        }
        if self.latency_budget_ns == 0 {
            return bad("latency_budget_ns must be positive");
        }
        if !(self.session_grace_s >= 0.0 && self.session_grace_s.is_finite()) {
            return bad("session_grace_s must be a non-negative number");
        }
        if self.telemetry_capacity == 0 || self.spike_interval_ms == 0 {
            return bad("telemetry_capacity and spike_interval_ms must be positive");
        }
        if self.budget.target_frame_ns == 0 {
            return bad("budget.target_frame_ns must be positive");
        }
        self.placement.validate().map_err(|e| ServeError::Config(e.to_string()))
    }
}

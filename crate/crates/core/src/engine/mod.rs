//! Uniform contract over container runtimes.
//!
//! Two implementations sit behind [`ContainerEngine`]: a deterministic
//! [`SimulatedEngine`] driven by a virtual clock, and an [`ExternalEngine`]
//! that renders user-configurable argument-vector templates for CLIs such
//! as Docker or Apptainer/Singularity.

mod external;
mod sim;
pub mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ImageId, ImageRecord, PortSpec, ReadinessProbe, VolumeSpec};

pub use external::{
    CommandOutput, CommandRunner, ExternalConfig, ExternalEngine, Preset, ProcessRunner, PullPolicy, RecordingRunner,
    Verb,
};
pub use sim::{SimActivity, SimContainer, SimFile, SimScenario, SimulatedEngine, VirtualClock};

pub const ENGINE_ENV: &str = "PROVFORGE_ENGINE";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("pull of {image} failed (status {status}): {stderr}")]
    PullFailed { image: String, status: i32, stderr: String },
    #[error("start of {container} failed: {reason}")]
    StartFailed { container: String, reason: String },
    #[error("host port {port} is already in use")]
    PortCollision { port: u16 },
    #[error("{container} not ready after {waited_ms} ms")]
    ReadinessTimeout { container: String, waited_ms: u64 },
    #[error("exec in {container} failed: {reason}")]
    ExecFailed { container: String, reason: String },
    #[error("stop of {container} failed: {reason}")]
    StopFailed { container: String, reason: String },
    #[error("{container}: illegal transition {from} -> {to}")]
    InvalidState { container: String, from: ContainerState, to: ContainerState },
    #[error("engine template: {0}")]
    Template(String),
    #[error("engine config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerState {
    Created,
    Running,
    Ready,
    Stopped,
    Failed,
}

impl fmt::Display for ContainerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ContainerState::Created => "created",
            ContainerState::Running => "running",
            ContainerState::Ready => "ready",
            ContainerState::Stopped => "stopped",
            ContainerState::Failed => "failed",
        };
        f.write_str(s)
    }
}

impl ContainerState {
    /// created→running→ready→stopped, with failed reachable from any
    /// non-stopped state. Running may also stop directly.
    pub fn can_become(self, next: ContainerState) -> bool {
        use ContainerState::*;
        matches!(
            (self, next),
            (Created, Running) | (Running, Ready) | (Running | Ready, Stopped) | (Created | Running | Ready, Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHandle {
    pub container_name: String,
    pub image: ImageId,
    pub digest: String,
    pub state: ContainerState,
    pub started_at_ms: Option<u64>,
    pub stopped_at_ms: Option<u64>,
    pub ports: Vec<PortSpec>,
    pub volumes: Vec<VolumeSpec>,
    pub host_metadata: BTreeMap<String, String>,
}

impl ContainerHandle {
    pub fn new(name: &str, image: &ImageRecord, ports: &[PortSpec], volumes: &[VolumeSpec]) -> Self {
        Self {
            container_name: name.to_string(),
            image: image.id(),
            digest: image.digest.clone(),
            state: ContainerState::Created,
            started_at_ms: None,
            stopped_at_ms: None,
            ports: ports.to_vec(),
            volumes: volumes.to_vec(),
            host_metadata: BTreeMap::new(),
        }
    }

    pub fn transition(&mut self, next: ContainerState) -> Result<(), EngineError> {
        if !self.state.can_become(next) {
            return Err(EngineError::InvalidState {
                container: self.container_name.clone(),
                from: self.state,
                to: next,
            });
        }
        self.state = next;
        Ok(())
    }

    /// Host port published for a container port.
    pub fn host_port(&self, container_port: u16) -> Option<u16> {
        self.ports.iter().find(|p| p.container_port == container_port).map(|p| p.host_port)
    }

    /// Host-side path for a path inside the container, via bound volumes.
    pub fn host_path_for(&self, container_path: &str) -> Option<PathBuf> {
        self.volumes
            .iter()
            .filter(|v| {
                container_path == v.container_path
                    || container_path.starts_with(&format!("{}/", v.container_path.trim_end_matches('/')))
            })
            .max_by_key(|v| v.container_path.len())
            .map(|v| {
                let rest = container_path[v.container_path.len()..].trim_start_matches('/');
                if rest.is_empty() {
                    PathBuf::from(&v.host_path)
                } else {
                    Path::new(&v.host_path).join(rest)
                }
            })
    }

    /// Metadata shared by both engines.
    pub(crate) fn base_metadata(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("image".into(), self.image.to_string());
        m.insert("digest".into(), self.digest.clone());
        let ports: Vec<_> = self.ports.iter().map(|p| format!("{}:{}", p.host_port, p.container_port)).collect();
        m.insert("ports".into(), ports.join(","));
        let vols: Vec<_> = self.volumes.iter().map(template::volume_binding).collect();
        m.insert("volumes".into(), vols.join(","));
        m.insert("state".into(), self.state.to_string());
        if let Some(t) = self.started_at_ms {
            m.insert("started_at_ms".into(), t.to_string());
        }
        if let Some(t) = self.stopped_at_ms {
            m.insert("stopped_at_ms".into(), t.to_string());
        }
        m
    }
}

pub struct StartRequest<'a> {
    pub image: &'a ImageRecord,
    pub name: &'a str,
    pub volumes: &'a [VolumeSpec],
    pub ports: &'a [PortSpec],
    /// Commands issued at start; the last is the container's main command.
    pub entry: &'a [Vec<String>],
}

pub struct ExecRequest<'a> {
    pub argv: &'a [String],
    /// Activity name; the simulated engine scripts behaviour by it.
    pub label: &'a str,
    pub stdout: &'a Path,
    pub stderr: &'a Path,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutput {
    pub exit_code: i32,
    pub duration_ms: u64,
    pub stdout_ref: PathBuf,
    pub stderr_ref: PathBuf,
}

pub trait ContainerEngine {
    /// `name/version`, e.g. `simulated/1`.
    fn engine_id(&self) -> String;

    /// Monotonic milliseconds since the engine was created.
    fn now_ms(&self) -> u64;

    fn pull_image(&mut self, image: &ImageRecord) -> Result<(), EngineError>;

    fn start_container(&mut self, request: StartRequest<'_>) -> Result<ContainerHandle, EngineError>;

    /// Waits until the probe passes. `None` means the container is ready as
    /// soon as it runs.
    fn await_ready(&mut self, handle: &mut ContainerHandle, probe: Option<&ReadinessProbe>) -> Result<(), EngineError>;

    /// Blocks until the command exits. A nonzero exit is a result, not an error.
    fn run_in_container(
        &mut self,
        handle: &ContainerHandle,
        request: ExecRequest<'_>,
    ) -> Result<ExecOutput, EngineError>;

    /// Idempotent on stopped handles; a no-op on failed ones.
    fn stop_container(&mut self, handle: &mut ContainerHandle) -> Result<(), EngineError>;

    fn collect_metadata(&mut self, handle: &ContainerHandle) -> BTreeMap<String, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Simulated,
    External,
}

/// Engine configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub kind: EngineKind,
    /// Built-in template set for external engines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Per-verb templates; entries override the preset.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub command_template: BTreeMap<Verb, Vec<String>>,
    #[serde(default)]
    pub pull_policy: PullPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_flag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port_flag: Option<String>,
    /// Inline scenario for the simulated engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<SimScenario>,
}

impl EngineConfig {
    pub fn simulated(scenario: SimScenario) -> Self {
        Self {
            kind: EngineKind::Simulated,
            preset: None,
            command_template: BTreeMap::new(),
            pull_policy: PullPolicy::IfMissing,
            volume_flag: None,
            port_flag: None,
            scenario: Some(scenario),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| EngineError::Config(format!("at `{}`: {}", e.path(), e.inner())))
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| EngineError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    /// Builds the engine; external engines run real processes.
    pub fn build(&self) -> Result<Box<dyn ContainerEngine>, EngineError> {
        match self.kind {
            EngineKind::Simulated => Ok(Box::new(SimulatedEngine::new(self.scenario.clone().unwrap_or_default()))),
            EngineKind::External => {
                let cfg = ExternalConfig::from_engine_config(self)?;
                Ok(Box::new(ExternalEngine::new(cfg, Box::new(ProcessRunner))))
            }
        }
    }
}

//! Deterministic simulated engine.
//!
//! Time is a virtual millisecond counter that only moves when the engine
//! does something. Every lifecycle call costs at least one tick, so events
//! recorded by the deployer are strictly ordered. Behaviour (latencies,
//! readiness, failures, activity durations and exit codes) comes from a
//! [`SimScenario`]; optional jitter is drawn from a seeded generator, so a
//! scenario plus seed always yields the same timeline.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ContainerEngine, ContainerHandle, ContainerState, EngineError, ExecOutput, ExecRequest, StartRequest};
use crate::catalog::{ImageRecord, ReadinessProbe};

pub const SIM_ENGINE_ID: &str = "simulated/1";

#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now_ms: Cell<u64>,
}

impl VirtualClock {
    pub fn now_ms(&self) -> u64 {
        self.now_ms.get()
    }

    pub fn advance(&self, ms: u64) {
        self.now_ms.set(self.now_ms.get() + ms);
    }

    pub fn set(&self, ms: u64) {
        debug_assert!(ms >= self.now_ms.get(), "virtual clock is monotonic");
        self.now_ms.set(ms.max(self.now_ms.get()));
    }
}

/// A file the simulation writes into a bound volume (container path).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub path: String,
    pub content: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimContainer {
    /// Time after start at which the service passes its probe.
    pub ready_after_ms: u64,
    pub never_ready: bool,
    pub fail_start: bool,
    pub fail_stop: bool,
    /// Written on start, e.g. a provenance database in a bound volume.
    pub files: Vec<SimFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimActivity {
    pub duration_ms: u64,
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
    /// The command cannot be spawned at all.
    pub spawn_fail: bool,
    pub outputs: Vec<SimFile>,
}

impl Default for SimActivity {
    fn default() -> Self {
        Self {
            duration_ms: 1000,
            exit_code: 0,
            stdout: String::new(),
            stderr: String::new(),
            spawn_fail: false,
            outputs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub seed: u64,
    pub pull_ms: u64,
    pub start_ms: u64,
    pub stop_ms: u64,
    /// Uniform extra latency in `0..=jitter_ms` on pull/start/stop.
    pub jitter_ms: u64,
    /// Image ids (`name:tag`) or names the registry does not have.
    pub missing_images: Vec<String>,
    /// Host ports already taken on the simulated host.
    pub occupied_ports: Vec<u16>,
    /// Behaviour by container name.
    pub containers: BTreeMap<String, SimContainer>,
    /// Behaviour by activity name.
    pub activities: BTreeMap<String, SimActivity>,
    pub default_activity_ms: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            seed: 0,
            pull_ms: 1000,
            start_ms: 500,
            stop_ms: 200,
            jitter_ms: 0,
            missing_images: Vec::new(),
            occupied_ports: Vec::new(),
            containers: BTreeMap::new(),
            activities: BTreeMap::new(),
            default_activity_ms: 1000,
        }
    }
}

pub struct SimulatedEngine {
    scenario: SimScenario,
    clock: VirtualClock,
    rng: ChaCha8Rng,
    pulled: BTreeSet<String>,
    pull_count: usize,
    ports_in_use: BTreeMap<u16, String>,
}

impl SimulatedEngine {
    pub fn new(scenario: SimScenario) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        Self {
            scenario,
            clock: VirtualClock::default(),
            rng,
            pulled: BTreeSet::new(),
            pull_count: 0,
            ports_in_use: BTreeMap::new(),
        }
    }

    pub fn scenario(&self) -> &SimScenario {
        &self.scenario
    }

    /// Number of pulls that actually fetched an image.
    pub fn pull_count(&self) -> usize {
        self.pull_count
    }

    fn tick(&mut self, base_ms: u64) {
        let jitter = if self.scenario.jitter_ms > 0 { self.rng.gen_range(0..=self.scenario.jitter_ms) } else { 0 };
        self.clock.advance((base_ms + jitter).max(1));
    }

    fn container(&self, name: &str) -> SimContainer {
        self.scenario.containers.get(name).cloned().unwrap_or_default()
    }

    fn write_files(handle: &ContainerHandle, files: &[SimFile]) -> Result<(), EngineError> {
        for f in files {
            // Files outside any bound volume vanish with the container.
            if let Some(host) = handle.host_path_for(&f.path) {
                write_file(&host, f.content.as_bytes())?;
            }
        }
        Ok(())
    }

    fn release_ports(&mut self, handle: &ContainerHandle) {
        self.ports_in_use.retain(|_, owner| *owner != handle.container_name);
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), EngineError> {
    let io = |source| EngineError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, bytes).map_err(|source| EngineError::Io { path: path.to_path_buf(), source })
}

impl ContainerEngine for SimulatedEngine {
    fn engine_id(&self) -> String {
        SIM_ENGINE_ID.to_string()
    }

    fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    fn pull_image(&mut self, image: &ImageRecord) -> Result<(), EngineError> {
        let id = image.id().to_string();
        if self.pulled.contains(&id) {
            return Ok(());
        }
        self.tick(self.scenario.pull_ms);
        if self.scenario.missing_images.iter().any(|m| *m == id || *m == image.name) {
            return Err(EngineError::PullFailed {
                image: id,
                status: 1,
                stderr: "manifest unknown: image not found in registry".into(),
            });
        }
        self.pull_count += 1;
        self.pulled.insert(id);
        Ok(())
    }

    fn start_container(&mut self, req: StartRequest<'_>) -> Result<ContainerHandle, EngineError> {
        let behaviour = self.container(req.name);
        if !self.pulled.contains(&req.image.id().to_string()) {
            return Err(EngineError::StartFailed { container: req.name.into(), reason: "image not pulled".into() });
        }
        for p in req.ports {
            if self.scenario.occupied_ports.contains(&p.host_port) || self.ports_in_use.contains_key(&p.host_port) {
                return Err(EngineError::PortCollision { port: p.host_port });
            }
        }
        self.tick(self.scenario.start_ms);
        if behaviour.fail_start {
            return Err(EngineError::StartFailed {
                container: req.name.into(),
                reason: "scripted start failure".into(),
            });
        }
        let mut handle = ContainerHandle::new(req.name, req.image, req.ports, req.volumes);
        handle.transition(ContainerState::Running)?;
        handle.started_at_ms = Some(self.clock.now_ms());
        handle.host_metadata = sim_host_metadata();
        handle
            .host_metadata
            .insert("entry".into(), req.entry.iter().map(|c| c.join(" ")).collect::<Vec<_>>().join(" && "));
        for p in req.ports {
            self.ports_in_use.insert(p.host_port, req.name.to_string());
        }
        Self::write_files(&handle, &behaviour.files)?;
        Ok(handle)
    }

    fn await_ready(&mut self, handle: &mut ContainerHandle, probe: Option<&ReadinessProbe>) -> Result<(), EngineError> {
        if handle.state != ContainerState::Running {
            return Err(EngineError::InvalidState {
                container: handle.container_name.clone(),
                from: handle.state,
                to: ContainerState::Ready,
            });
        }
        let Some(probe) = probe else {
            return handle.transition(ContainerState::Ready);
        };
        let behaviour = self.container(&handle.container_name);
        let t0 = self.clock.now_ms();
        let deadline = t0 + probe.timeout_ms();
        let ready_at = (!behaviour.never_ready).then(|| handle.started_at_ms.unwrap_or(t0) + behaviour.ready_after_ms);
        let interval = probe.interval_ms();
        let first_passing_poll =
            ready_at.map(|r| if r <= t0 { t0 } else { t0 + (r - t0).div_ceil(interval) * interval });
        match first_passing_poll {
            Some(t) if t <= deadline => {
                self.clock.set(t);
                handle.transition(ContainerState::Ready)
            }
            _ => {
                self.clock.set(deadline);
                handle.transition(ContainerState::Failed)?;
                self.release_ports(handle);
                Err(EngineError::ReadinessTimeout {
                    container: handle.container_name.clone(),
                    waited_ms: deadline - t0,
                })
            }
        }
    }

    fn run_in_container(&mut self, handle: &ContainerHandle, req: ExecRequest<'_>) -> Result<ExecOutput, EngineError> {
        if !matches!(handle.state, ContainerState::Running | ContainerState::Ready) {
            return Err(EngineError::ExecFailed {
                container: handle.container_name.clone(),
                reason: format!("container is {}", handle.state),
            });
        }
        let script = self.scenario.activities.get(req.label).cloned().unwrap_or_else(|| SimActivity {
            duration_ms: self.scenario.default_activity_ms,
            ..SimActivity::default()
        });
        if script.spawn_fail {
            return Err(EngineError::ExecFailed {
                container: handle.container_name.clone(),
                reason: format!("cannot spawn `{}`", req.argv.first().map(String::as_str).unwrap_or("")),
            });
        }
        self.clock.advance(script.duration_ms);
        write_file(req.stdout, script.stdout.as_bytes())?;
        write_file(req.stderr, script.stderr.as_bytes())?;
        Self::write_files(handle, &script.outputs)?;
        Ok(ExecOutput {
            exit_code: script.exit_code,
            duration_ms: script.duration_ms,
            stdout_ref: req.stdout.to_path_buf(),
            stderr_ref: req.stderr.to_path_buf(),
        })
    }

    fn stop_container(&mut self, handle: &mut ContainerHandle) -> Result<(), EngineError> {
        match handle.state {
            ContainerState::Stopped | ContainerState::Failed => return Ok(()),
            ContainerState::Created => return handle.transition(ContainerState::Failed),
            ContainerState::Running | ContainerState::Ready => {}
        }
        self.tick(self.scenario.stop_ms);
        self.release_ports(handle);
        if self.container(&handle.container_name).fail_stop {
            handle.transition(ContainerState::Failed)?;
            return Err(EngineError::StopFailed {
                container: handle.container_name.clone(),
                reason: "scripted stop failure".into(),
            });
        }
        handle.transition(ContainerState::Stopped)?;
        handle.stopped_at_ms = Some(self.clock.now_ms());
        Ok(())
    }

    fn collect_metadata(&mut self, handle: &ContainerHandle) -> BTreeMap<String, String> {
        let mut m = sim_host_metadata();
        m.extend(handle.base_metadata());
        m
    }
}

fn sim_host_metadata() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("engine".to_string(), SIM_ENGINE_ID.to_string()),
        ("hostname".to_string(), "sim-host".to_string()),
        ("kernel".to_string(), "virtual".to_string()),
    ])
}

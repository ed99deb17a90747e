//! Engine that drives a container CLI through argument-vector templates.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::template::{self, port_args, volume_args, TemplateVars};
use super::{
    ContainerEngine, ContainerHandle, ContainerState, EngineConfig, EngineError, ExecOutput, ExecRequest, StartRequest,
};
use crate::catalog::{ImageRecord, ProbeTarget, ReadinessProbe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Pull,
    Start,
    Exec,
    Stop,
    Inspect,
    /// Optional: exits 0 when the image is already present locally.
    ImageExists,
    /// Optional: prints the engine version.
    Version,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PullPolicy {
    Always,
    #[default]
    IfMissing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Docker,
    Apptainer,
}

fn argv(tokens: &[&str]) -> Vec<String> {
    tokens.iter().map(|t| t.to_string()).collect()
}

impl Preset {
    pub fn templates(self) -> BTreeMap<Verb, Vec<String>> {
        match self {
            Preset::Docker => BTreeMap::from([
                (Verb::Pull, argv(&["docker", "pull", "{image}"])),
                (Verb::ImageExists, argv(&["docker", "image", "inspect", "{image}"])),
                (
                    Verb::Start,
                    argv(&["docker", "run", "-d", "--name", "{name}", "{volumes}", "{ports}", "{image}", "{cmd}"]),
                ),
                (Verb::Exec, argv(&["docker", "exec", "{name}", "{cmd}"])),
                (Verb::Stop, argv(&["docker", "rm", "-f", "{name}"])),
                (Verb::Inspect, argv(&["docker", "inspect", "{name}"])),
                (Verb::Version, argv(&["docker", "--version"])),
            ]),
            Preset::Apptainer => BTreeMap::from([
                (Verb::Pull, argv(&["apptainer", "pull", "--force", "{name}.sif", "{image}"])),
                (Verb::Start, argv(&["apptainer", "instance", "start", "{volumes}", "{image}", "{name}", "{cmd}"])),
                (Verb::Exec, argv(&["apptainer", "exec", "instance://{name}", "{cmd}"])),
                (Verb::Stop, argv(&["apptainer", "instance", "stop", "{name}"])),
                (Verb::Inspect, argv(&["apptainer", "instance", "list", "--json", "{name}"])),
                (Verb::Version, argv(&["apptainer", "--version"])),
            ]),
        }
    }

    fn volume_flag(self) -> &'static str {
        match self {
            Preset::Docker => "-v",
            Preset::Apptainer => "--bind",
        }
    }

    fn port_flag(self) -> Option<&'static str> {
        match self {
            Preset::Docker => Some("-p"),
            // Apptainer instances share the host network.
            Preset::Apptainer => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalConfig {
    pub templates: BTreeMap<Verb, Vec<String>>,
    pub pull_policy: PullPolicy,
    pub volume_flag: Option<String>,
    pub port_flag: Option<String>,
    pub engine_name: String,
}

impl ExternalConfig {
    pub fn preset(preset: Preset) -> Self {
        Self {
            templates: preset.templates(),
            pull_policy: PullPolicy::IfMissing,
            volume_flag: Some(preset.volume_flag().to_string()),
            port_flag: preset.port_flag().map(str::to_string),
            engine_name: format!("{preset:?}").to_lowercase(),
        }
    }

    pub fn from_engine_config(cfg: &EngineConfig) -> Result<Self, EngineError> {
        let mut out = match cfg.preset {
            Some(p) => Self::preset(p),
            None => Self {
                templates: BTreeMap::new(),
                pull_policy: PullPolicy::IfMissing,
                volume_flag: None,
                port_flag: None,
                engine_name: String::new(),
            },
        };
        out.templates.extend(cfg.command_template.clone());
        out.pull_policy = cfg.pull_policy;
        if cfg.volume_flag.is_some() {
            out.volume_flag = cfg.volume_flag.clone();
        }
        if cfg.port_flag.is_some() {
            out.port_flag = cfg.port_flag.clone();
        }
        if out.engine_name.is_empty() {
            out.engine_name =
                out.templates.get(&Verb::Start).and_then(|t| t.first()).cloned().unwrap_or_else(|| "external".into());
        }
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        for verb in [Verb::Pull, Verb::Start, Verb::Exec, Verb::Stop] {
            if !self.templates.contains_key(&verb) {
                return Err(EngineError::Config(format!("external engines need a `{verb:?}` template").to_lowercase()));
            }
        }
        for t in self.templates.values() {
            template::check_template(t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommandOutput {
    pub status: i32,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

impl CommandOutput {
    pub fn ok(stdout: &str) -> Self {
        Self { status: 0, stdout: stdout.as_bytes().to_vec(), stderr: Vec::new() }
    }

    pub fn failed(status: i32, stderr: &str) -> Self {
        Self { status, stdout: Vec::new(), stderr: stderr.as_bytes().to_vec() }
    }
}

/// Spawns argument vectors. When `logs` is given, stdout and stderr go to
/// those files instead of being captured.
pub trait CommandRunner {
    fn run(&mut self, argv: &[String], logs: Option<(&Path, &Path)>) -> std::io::Result<CommandOutput>;
}

/// Runs commands as child processes, never through a shell.
pub struct ProcessRunner;

impl CommandRunner for ProcessRunner {
    fn run(&mut self, argv: &[String], logs: Option<(&Path, &Path)>) -> std::io::Result<CommandOutput> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty argument vector"))?;
        let mut cmd = Command::new(program);
        cmd.args(args).stdin(Stdio::null());
        match logs {
            Some((out, err)) => {
                cmd.stdout(File::create(out)?).stderr(File::create(err)?);
                let status = cmd.status()?;
                Ok(CommandOutput { status: status.code().unwrap_or(-1), ..Default::default() })
            }
            None => {
                let output = cmd.output()?;
                Ok(CommandOutput {
                    status: output.status.code().unwrap_or(-1),
                    stdout: output.stdout,
                    stderr: output.stderr,
                })
            }
        }
    }
}

type Responder = Box<dyn FnMut(&[String]) -> CommandOutput + Send>;

/// Test shim: records every argument vector and answers from a closure.
/// Clones share the same log.
#[derive(Clone)]
pub struct RecordingRunner {
    calls: Arc<Mutex<Vec<Vec<String>>>>,
    respond: Arc<Mutex<Responder>>,
}

impl Default for RecordingRunner {
    fn default() -> Self {
        Self::new(|_| CommandOutput::ok(""))
    }
}

impl RecordingRunner {
    pub fn new(respond: impl FnMut(&[String]) -> CommandOutput + Send + 'static) -> Self {
        Self { calls: Arc::default(), respond: Arc::new(Mutex::new(Box::new(respond))) }
    }

    pub fn calls(&self) -> Vec<Vec<String>> {
        self.calls.lock().expect("runner log").clone()
    }

    /// Calls whose argument vector contains `token`.
    pub fn count_with(&self, token: &str) -> usize {
        self.calls().iter().filter(|c| c.iter().any(|a| a == token)).count()
    }
}

impl CommandRunner for RecordingRunner {
    fn run(&mut self, argv: &[String], logs: Option<(&Path, &Path)>) -> std::io::Result<CommandOutput> {
        self.calls.lock().expect("runner log").push(argv.to_vec());
        let out = (self.respond.lock().expect("responder"))(argv);
        if let Some((o, e)) = logs {
            std::fs::write(o, &out.stdout)?;
            std::fs::write(e, &out.stderr)?;
        }
        Ok(out)
    }
}

pub struct ExternalEngine {
    config: ExternalConfig,
    runner: Box<dyn CommandRunner>,
    epoch: Instant,
    pulled: BTreeSet<String>,
    version: Option<String>,
}

impl ExternalEngine {
    pub fn new(config: ExternalConfig, runner: Box<dyn CommandRunner>) -> Self {
        Self { config, runner, epoch: Instant::now(), pulled: BTreeSet::new(), version: None }
    }

    fn render(&self, verb: Verb, vars: &TemplateVars<'_>) -> Result<Vec<String>, EngineError> {
        let tmpl =
            self.config.templates.get(&verb).ok_or_else(|| EngineError::Config(format!("no template for {verb:?}")))?;
        template::render(tmpl, vars)
    }

    fn invoke(&mut self, argv: &[String]) -> Result<CommandOutput, std::io::Error> {
        self.runner.run(argv, None)
    }

    fn exec_vars<'a>(name: &'a str, cmd: &'a [String]) -> TemplateVars<'a> {
        TemplateVars { name, cmd, ..Default::default() }
    }

    fn probe_once(&mut self, handle: &ContainerHandle, probe: &ReadinessProbe) -> bool {
        match &probe.target {
            ProbeTarget::Port(port) => {
                let host_port = handle.host_port(*port).unwrap_or(*port);
                let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, host_port));
                TcpStream::connect_timeout(&addr, Duration::from_millis(probe.interval_ms().min(1000))).is_ok()
            }
            ProbeTarget::Command(cmd) => self.exec_status(&handle.container_name, cmd) == Some(0),
            ProbeTarget::Path(path) => match handle.host_path_for(path) {
                Some(host) => host.exists(),
                None => {
                    let test = vec!["test".to_string(), "-e".to_string(), path.clone()];
                    self.exec_status(&handle.container_name, &test) == Some(0)
                }
            },
        }
    }

    fn exec_status(&mut self, name: &str, cmd: &[String]) -> Option<i32> {
        let argv = self.render(Verb::Exec, &Self::exec_vars(name, cmd)).ok()?;
        self.invoke(&argv).ok().map(|o| o.status)
    }

    fn stop_quietly(&mut self, name: &str) {
        if let Ok(argv) = self.render(Verb::Stop, &TemplateVars { name, ..Default::default() }) {
            let _ = self.invoke(&argv);
        }
    }

    fn engine_version(&mut self) -> String {
        if let Some(v) = &self.version {
            return v.clone();
        }
        let v = self
            .render(Verb::Version, &TemplateVars::default())
            .ok()
            .and_then(|argv| self.invoke(&argv).ok())
            .filter(|o| o.status == 0)
            .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
            .unwrap_or_default();
        self.version = Some(v.clone());
        v
    }
}

fn lossy(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).trim().to_string()
}

fn io_failure(container: &str) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |e| EngineError::StartFailed { container: container.to_string(), reason: e.to_string() }
}

impl ContainerEngine for ExternalEngine {
    fn engine_id(&self) -> String {
        self.config.engine_name.clone()
    }

    fn now_ms(&self) -> u64 {
        self.epoch.elapsed().as_millis() as u64
    }

    fn pull_image(&mut self, image: &ImageRecord) -> Result<(), EngineError> {
        let reference = image.reference();
        let stem = format!("{}_{}", image.name, image.tag);
        let vars = TemplateVars { image: &reference, name: &stem, ..Default::default() };
        if self.config.pull_policy == PullPolicy::IfMissing {
            if self.pulled.contains(&reference) {
                return Ok(());
            }
            if self.config.templates.contains_key(&Verb::ImageExists) {
                let argv = self.render(Verb::ImageExists, &vars)?;
                if self.invoke(&argv).is_ok_and(|o| o.status == 0) {
                    self.pulled.insert(reference);
                    return Ok(());
                }
            }
        }
        let argv = self.render(Verb::Pull, &vars)?;
        let out = self.invoke(&argv).map_err(|e| EngineError::PullFailed {
            image: reference.clone(),
            status: -1,
            stderr: e.to_string(),
        })?;
        if out.status != 0 {
            return Err(EngineError::PullFailed { image: reference, status: out.status, stderr: lossy(&out.stderr) });
        }
        self.pulled.insert(reference);
        Ok(())
    }

    fn start_container(&mut self, req: StartRequest<'_>) -> Result<ContainerHandle, EngineError> {
        for p in req.ports {
            if TcpListener::bind((Ipv4Addr::UNSPECIFIED, p.host_port)).is_err() {
                return Err(EngineError::PortCollision { port: p.host_port });
            }
        }
        let reference = req.image.reference();
        let (services, main) = match req.entry.split_last() {
            Some((main, services)) => (services, main.as_slice()),
            None => (&[][..], &[][..]),
        };
        let vars = TemplateVars {
            image: &reference,
            name: req.name,
            volumes: volume_args(self.config.volume_flag.as_deref(), req.volumes),
            ports: port_args(self.config.port_flag.as_deref(), req.ports),
            cmd: main,
        };
        let argv = self.render(Verb::Start, &vars)?;
        let out = self.invoke(&argv).map_err(io_failure(req.name))?;
        if out.status != 0 {
            return Err(EngineError::StartFailed { container: req.name.into(), reason: lossy(&out.stderr) });
        }
        let mut handle = ContainerHandle::new(req.name, req.image, req.ports, req.volumes);
        handle.transition(ContainerState::Running)?;
        handle.started_at_ms = Some(self.now_ms());
        // Bundled services start through exec and are expected to daemonize.
        for service in services {
            let argv = self.render(Verb::Exec, &Self::exec_vars(req.name, service))?;
            let out = self.invoke(&argv).map_err(io_failure(req.name))?;
            if out.status != 0 {
                self.stop_quietly(req.name);
                return Err(EngineError::StartFailed {
                    container: req.name.into(),
                    reason: format!("`{}` exited {}: {}", service.join(" "), out.status, lossy(&out.stderr)),
                });
            }
        }
        handle.host_metadata = host_metadata();
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
        let started = Instant::now();
        let timeout = Duration::from_millis(probe.timeout_ms());
        let interval = Duration::from_millis(probe.interval_ms());
        loop {
            if self.probe_once(handle, probe) {
                return handle.transition(ContainerState::Ready);
            }
            if started.elapsed() + interval > timeout {
                break;
            }
            std::thread::sleep(interval);
        }
        self.stop_quietly(&handle.container_name.clone());
        handle.transition(ContainerState::Failed)?;
        Err(EngineError::ReadinessTimeout {
            container: handle.container_name.clone(),
            waited_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn run_in_container(&mut self, handle: &ContainerHandle, req: ExecRequest<'_>) -> Result<ExecOutput, EngineError> {
        if !matches!(handle.state, ContainerState::Running | ContainerState::Ready) {
            return Err(EngineError::ExecFailed {
                container: handle.container_name.clone(),
                reason: format!("container is {}", handle.state),
            });
        }
        let argv = self.render(Verb::Exec, &Self::exec_vars(&handle.container_name, req.argv))?;
        let start = Instant::now();
        let out = self
            .runner
            .run(&argv, Some((req.stdout, req.stderr)))
            .map_err(|e| EngineError::ExecFailed { container: handle.container_name.clone(), reason: e.to_string() })?;
        Ok(ExecOutput {
            exit_code: out.status,
            duration_ms: start.elapsed().as_millis() as u64,
            stdout_ref: req.stdout.to_path_buf(),
            stderr_ref: req.stderr.to_path_buf(),
        })
    }

    fn stop_container(&mut self, handle: &mut ContainerHandle) -> Result<(), EngineError> {
        match handle.state {
            ContainerState::Stopped | ContainerState::Failed => return Ok(()),
            ContainerState::Created => return handle.transition(ContainerState::Failed),
            _ => {}
        }
        let argv = self.render(Verb::Stop, &TemplateVars { name: &handle.container_name, ..Default::default() })?;
        let result = self.invoke(&argv);
        match result {
            Ok(out) if out.status == 0 => {
                handle.transition(ContainerState::Stopped)?;
                handle.stopped_at_ms = Some(self.now_ms());
                Ok(())
            }
            other => {
                handle.transition(ContainerState::Failed)?;
                let reason = match other {
                    Ok(out) => format!("exit {}: {}", out.status, lossy(&out.stderr)),
                    Err(e) => e.to_string(),
                };
                Err(EngineError::StopFailed { container: handle.container_name.clone(), reason })
            }
        }
    }

    fn collect_metadata(&mut self, handle: &ContainerHandle) -> BTreeMap<String, String> {
        let mut m = host_metadata();
        m.insert("engine".into(), self.config.engine_name.clone());
        let version = self.engine_version();
        if !version.is_empty() {
            m.insert("engine_version".into(), version);
        }
        m.extend(handle.base_metadata());
        if handle.state != ContainerState::Stopped && self.config.templates.contains_key(&Verb::Inspect) {
            let inspected = self
                .render(Verb::Inspect, &TemplateVars { name: &handle.container_name, ..Default::default() })
                .ok()
                .and_then(|argv| self.invoke(&argv).ok())
                .filter(|o| o.status == 0)
                .and_then(|o| serde_json::from_slice::<Value>(&o.stdout).ok());
            if let Some(doc) = inspected {
                m.extend(parse_inspect(&doc));
            }
        }
        m
    }
}

fn read_trimmed(path: &str) -> Option<String> {
    std::fs::read_to_string(PathBuf::from(path)).ok().map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
}

fn host_metadata() -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    if let Some(h) = std::env::var("HOSTNAME").ok().or_else(|| read_trimmed("/proc/sys/kernel/hostname")) {
        m.insert("hostname".into(), h);
    }
    if let Some(k) = read_trimmed("/proc/sys/kernel/osrelease") {
        m.insert("kernel".into(), k);
    }
    m
}

/// Extracts digest, ports and mounts from `docker inspect` style output, or
/// the image path and pid from `apptainer instance list --json`. Fields
/// that are not present are left out.
pub fn parse_inspect(doc: &Value) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v.filter(|v| !v.is_empty()) {
            m.insert(k.to_string(), v);
        }
    };
    let str_at = |v: &Value, ptr: &str| v.pointer(ptr).and_then(Value::as_str).map(str::to_string);

    if let Some(inst) = doc.pointer("/instances/0") {
        put("inspect.image", str_at(inst, "/img"));
        put("inspect.pid", inst.get("pid").map(|p| p.to_string()));
        put("inspect.instance", str_at(inst, "/instance"));
        return m;
    }
    let c = doc.as_array().and_then(|a| a.first()).unwrap_or(doc);
    put("inspect.id", str_at(c, "/Id"));
    put("inspect.image_digest", str_at(c, "/Image"));
    put("inspect.image", str_at(c, "/Config/Image"));
    put("inspect.status", str_at(c, "/State/Status"));
    put("inspect.driver", str_at(c, "/Driver"));
    if let Some(mounts) = c.get("Mounts").and_then(Value::as_array) {
        let binds: Vec<String> = mounts
            .iter()
            .filter_map(|mt| Some(format!("{}:{}", mt.get("Source")?.as_str()?, mt.get("Destination")?.as_str()?)))
            .collect();
        put("inspect.mounts", Some(binds.join(",")));
    }
    if let Some(ports) = c.pointer("/NetworkSettings/Ports").and_then(Value::as_object) {
        let mut out = Vec::new();
        for (cport, bindings) in ports {
            for b in bindings.as_array().into_iter().flatten() {
                if let Some(hp) = b.get("HostPort").and_then(Value::as_str) {
                    out.push(format!("{hp}:{cport}"));
                }
            }
        }
        put("inspect.ports", Some(out.join(",")));
    }
    m
}

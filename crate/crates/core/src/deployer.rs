//! Executes a deployment plan against an engine and records the run.
//!
//! Execution is fail-fast: the first failing phase (or nonzero activity
//! exit) ends the run, and every container that was started is stopped in
//! reverse start order regardless of how the run ended. The record is
//! persisted for failed and aborted runs too.
//!
//! While a run is live its state is published to `runs/<id>/status.json`
//! by write-then-rename, so [`status`] readers never see a torn document.
//! [`request_abort`] drops a marker file that the orchestrator checks
//! between phases.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{SecondsFormat, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{
    read_json, write_bytes_atomic, write_json_atomic, Catalog, CatalogError, ImageId, ImageRecord, VolumeMode,
};
use crate::engine::{ContainerEngine, ContainerHandle, ContainerState, EngineError, ExecRequest, StartRequest};
use crate::planner::{validate_plan, DeploymentPlan, Phase, PhaseKind, PlanError};
use crate::record::{ActivityTiming, Attachment, ContainerEvent, EventKind, ImageUse, Outcome, RunRecord};
use crate::workflow::{Strategy, WorkflowSpec};
use crate::wrapper::{build_research_object, WrapError};

const STATUS_FILE: &str = "status.json";
const ABORT_FILE: &str = "abort.request";
pub const RESEARCH_OBJECT_FILE: &str = "research-object.provro";

#[derive(Debug, Error)]
pub enum DeployError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("image {image} has no catalog version with digest {digest}")]
    StaleImage { image: ImageId, digest: String },
    #[error("run {} failed in {}: {}", .record.run_id, .record.failure_phase.as_deref().unwrap_or("?"), .record.failure_reason.as_deref().unwrap_or("?"))]
    RunFailed { record: Box<RunRecord> },
    #[error("run {} was aborted", .record.run_id)]
    Aborted { record: Box<RunRecord> },
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("run `{0}` has already finished")]
    AlreadyTerminal(String),
    #[error("run `{0}` did not stop within the wait limit")]
    AbortTimeout(String),
    #[error("research object for run {run_id}: {source}")]
    Wrap { run_id: String, source: WrapError },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl DeployError {
    /// The persisted record, for runs that got far enough to have one.
    pub fn record(&self) -> Option<&RunRecord> {
        match self {
            DeployError::RunFailed { record } | DeployError::Aborted { record } => Some(record),
            _ => None,
        }
    }
}

/// Live view of a run, published after every phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub run_id: String,
    pub workflow_name: String,
    pub strategy: Strategy,
    /// Label of the phase being executed; `None` once terminal.
    pub current_phase: Option<String>,
    pub phase_index: usize,
    pub phase_count: usize,
    pub containers: BTreeMap<String, ContainerState>,
    pub completed_activities: Vec<String>,
    pub elapsed_ms: u64,
    /// Set once the run is terminal.
    pub outcome: Option<Outcome>,
}

impl RunStatus {
    pub fn is_terminal(&self) -> bool {
        self.outcome.is_some()
    }

    fn from_record(record: &RunRecord) -> Self {
        let mut containers = BTreeMap::new();
        for e in &record.container_events {
            let state = match e.event {
                EventKind::Started => ContainerState::Running,
                EventKind::Ready => ContainerState::Ready,
                EventKind::Stopped => ContainerState::Stopped,
                EventKind::Failed => ContainerState::Failed,
            };
            containers.insert(e.container.clone(), state);
        }
        Self {
            run_id: record.run_id.clone(),
            workflow_name: record.workflow_name.clone(),
            strategy: record.strategy,
            current_phase: None,
            phase_index: record.plan.phases.len(),
            phase_count: record.plan.phases.len(),
            containers,
            completed_activities: record.activity_timings.iter().map(|t| t.activity.clone()).collect(),
            elapsed_ms: record.duration_ms,
            outcome: Some(record.outcome),
        }
    }
}

/// Called with the freshly published status before each phase runs.
pub type PhaseHook<'a> = Box<dyn FnMut(&RunStatus) + 'a>;

#[derive(Default)]
pub struct DeployOptions<'a> {
    /// Skip the research object on success.
    pub no_wrap: bool,
    /// Research object path; defaults to `runs/<id>/research-object.provro`.
    pub research_object: Option<PathBuf>,
    /// External files (e.g. profiler output) referenced from the record.
    pub attachments: Vec<Attachment>,
    /// Fixed run id, mainly for tests; generated when unset.
    pub run_id: Option<String>,
    pub on_phase: Option<PhaseHook<'a>>,
}

#[derive(Debug, Clone)]
pub struct DeployReport {
    pub record: RunRecord,
    pub research_object: Option<PathBuf>,
}

/// `YYYYMMDDTHHMMSSZ-xxxxxx`: sortable, with a random suffix against
/// collisions on shared filesystems.
pub fn new_run_id() -> String {
    let suffix: u32 = rand::thread_rng().gen_range(0..0x100_0000);
    format!("{}-{suffix:06x}", Utc::now().format("%Y%m%dT%H%M%SZ"))
}

fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DeployError + '_ {
    move |source| DeployError::Io { path: path.to_path_buf(), source }
}

/// Catalog version of `id` whose digest matches the one pinned in the plan.
fn pinned_record(catalog: &Catalog, id: &ImageId, digest: &str) -> Result<ImageRecord, DeployError> {
    catalog
        .image_versions(id)?
        .into_iter()
        .rev()
        .find(|v| v.record.digest == digest)
        .map(|v| v.record)
        .ok_or_else(|| DeployError::StaleImage { image: id.clone(), digest: digest.to_string() })
}

struct Failure {
    phase: String,
    reason: String,
    aborted: bool,
}

struct Run<'e, 'h> {
    plan: &'e DeploymentPlan,
    engine: &'e mut dyn ContainerEngine,
    run_dir: PathBuf,
    status: RunStatus,
    t0: u64,
    hook: Option<PhaseHook<'h>>,
    records: BTreeMap<ImageId, ImageRecord>,
    handles: Vec<ContainerHandle>,
    images: Vec<ImageUse>,
    events: Vec<ContainerEvent>,
    timings: Vec<ActivityTiming>,
    metadata: BTreeMap<String, BTreeMap<String, String>>,
}

impl Run<'_, '_> {
    fn publish(&mut self) -> Result<(), DeployError> {
        self.status.elapsed_ms = self.engine.now_ms() - self.t0;
        for h in &self.handles {
            self.status.containers.insert(h.container_name.clone(), h.state);
        }
        write_json_atomic(&self.run_dir.join(STATUS_FILE), &self.status)?;
        Ok(())
    }

    fn event(&mut self, container: &str, event: EventKind) {
        self.events.push(ContainerEvent { container: container.to_string(), event, at_ms: self.engine.now_ms() });
    }

    fn handle_mut(&mut self, container: &str) -> Option<&mut ContainerHandle> {
        self.handles.iter_mut().find(|h| h.container_name == container)
    }

    fn abort_requested(&self) -> bool {
        self.run_dir.join(ABORT_FILE).exists()
    }

    fn execute(&mut self) -> Result<(), Failure> {
        let plan = self.plan;
        for (i, phase) in plan.phases.iter().enumerate() {
            self.status.phase_index = i;
            self.status.current_phase = Some(phase.label());
            let fail = |reason: String| Failure { phase: phase.label(), reason, aborted: false };
            self.publish().map_err(|e| fail(e.to_string()))?;
            if let Some(hook) = self.hook.as_mut() {
                hook(&self.status);
            }
            if self.abort_requested() {
                return Err(Failure { phase: phase.label(), reason: "abort requested".into(), aborted: true });
            }
            self.run_phase(phase).map_err(fail)?;
        }
        Ok(())
    }

    fn run_phase(&mut self, phase: &Phase) -> Result<(), String> {
        let plan = self.plan;
        let c = phase.container.as_str();
        match phase.kind {
            PhaseKind::Pull => {
                let record = &self.records[&phase.image];
                self.engine.pull_image(record).map_err(|e| e.to_string())?;
                self.images.push(ImageUse {
                    image: phase.image.clone(),
                    digest: record.digest.clone(),
                    registry: record.registry.clone(),
                    pulled_at_ms: self.engine.now_ms(),
                });
            }
            PhaseKind::StartContainer => {
                let record = &self.records[&phase.image];
                let empty = Vec::new();
                let request = StartRequest {
                    image: record,
                    name: c,
                    volumes: plan.volume_assignments.get(c).unwrap_or(&empty),
                    ports: plan.port_assignments.get(c).map(Vec::as_slice).unwrap_or(&[]),
                    entry: plan.entry_sequences.get(c).map(Vec::as_slice).unwrap_or(&[]),
                };
                // Output volumes may not exist yet; inputs must.
                for v in request.volumes.iter().filter(|v| v.mode == VolumeMode::ReadWrite) {
                    let p = Path::new(&v.host_path);
                    fs::create_dir_all(p).map_err(|e| format!("{}: {e}", p.display()))?;
                }
                let handle = self.engine.start_container(request).map_err(|e| e.to_string())?;
                let meta = self.engine.collect_metadata(&handle);
                self.metadata.insert(c.to_string(), meta);
                self.handles.push(handle);
                self.event(c, EventKind::Started);
            }
            PhaseKind::AwaitReady => {
                let probe = plan.readiness.get(c);
                let Some(mut handle) = self.handle_mut(c).cloned() else {
                    return Err(format!("{c} was never started"));
                };
                let result = self.engine.await_ready(&mut handle, probe);
                let ok = result.is_ok();
                *self.handle_mut(c).expect("handle exists") = handle;
                self.event(c, if ok { EventKind::Ready } else { EventKind::Failed });
                result.map_err(|e| e.to_string())?;
            }
            PhaseKind::RunActivity => {
                let activity = phase.activity.clone().unwrap_or_default();
                let logs = self.run_dir.join("logs");
                let stdout = logs.join(format!("{activity}.stdout"));
                let stderr = logs.join(format!("{activity}.stderr"));
                let handle = self.handle_mut(c).cloned().ok_or_else(|| format!("{c} was never started"))?;
                let start_ms = self.engine.now_ms();
                let out = self
                    .engine
                    .run_in_container(
                        &handle,
                        ExecRequest { argv: &phase.argv, label: &activity, stdout: &stdout, stderr: &stderr },
                    )
                    .map_err(|e| e.to_string())?;
                let end_ms = self.engine.now_ms();
                self.timings.push(ActivityTiming {
                    activity: activity.clone(),
                    container: c.to_string(),
                    start_ms,
                    end_ms,
                    exit_code: out.exit_code,
                    stdout_log: format!("logs/{activity}.stdout"),
                    stderr_log: format!("logs/{activity}.stderr"),
                });
                if out.exit_code != 0 {
                    return Err(format!("activity {activity} exited with code {}", out.exit_code));
                }
                self.status.completed_activities.push(activity);
            }
            PhaseKind::StopContainer => {
                let Some(mut handle) = self.handle_mut(c).cloned() else {
                    return Err(format!("{c} was never started"));
                };
                self.stop(&mut handle)?;
            }
        }
        Ok(())
    }

    fn stop(&mut self, handle: &mut ContainerHandle) -> Result<(), String> {
        let c = handle.container_name.clone();
        if matches!(handle.state, ContainerState::Running | ContainerState::Ready) {
            let meta = self.engine.collect_metadata(handle);
            self.metadata.entry(c.clone()).or_default().extend(meta);
        }
        let was_live = matches!(handle.state, ContainerState::Running | ContainerState::Ready);
        let result = self.engine.stop_container(handle);
        if was_live {
            self.event(&c, if result.is_ok() { EventKind::Stopped } else { EventKind::Failed });
        }
        if let Some(slot) = self.handle_mut(&c) {
            *slot = handle.clone();
        }
        result.map_err(|e: EngineError| e.to_string())
    }

    /// Stops every container still live, newest first.
    fn cleanup(&mut self) {
        let live: Vec<ContainerHandle> = self
            .handles
            .iter()
            .rev()
            .filter(|h| matches!(h.state, ContainerState::Running | ContainerState::Ready))
            .cloned()
            .collect();
        for mut h in live {
            let _ = self.stop(&mut h);
        }
    }
}

/// Runs `plan` (built from `spec`) on `engine`, persists the record under
/// the catalog and, on success, writes the research object.
pub fn deploy(
    spec: &WorkflowSpec,
    plan: &DeploymentPlan,
    engine: &mut dyn ContainerEngine,
    catalog: &Catalog,
    options: DeployOptions<'_>,
) -> Result<DeployReport, DeployError> {
    validate_plan(plan)?;
    let mut records = BTreeMap::new();
    for (id, digest) in &plan.image_digests {
        records.insert(id.clone(), pinned_record(catalog, id, digest)?);
    }

    let run_id = options.run_id.clone().unwrap_or_else(new_run_id);
    let run_dir = catalog.run_dir(&run_id);
    if run_dir.exists() {
        return Err(CatalogError::RunExists(run_id).into());
    }
    for sub in ["logs", "artifacts"] {
        let d = run_dir.join(sub);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    write_bytes_atomic(&run_dir.join("spec.json"), spec.to_json().as_bytes())?;
    write_bytes_atomic(&run_dir.join("plan.json"), plan.to_json().as_bytes())?;

    let started_at = now_rfc3339();
    let t0 = engine.now_ms();
    let engine_id = engine.engine_id();
    let mut run = Run {
        plan,
        engine,
        run_dir: run_dir.clone(),
        status: RunStatus {
            run_id: run_id.clone(),
            workflow_name: plan.workflow_name.clone(),
            strategy: plan.strategy,
            current_phase: None,
            phase_index: 0,
            phase_count: plan.phases.len(),
            containers: BTreeMap::new(),
            completed_activities: Vec::new(),
            elapsed_ms: 0,
            outcome: None,
        },
        t0,
        hook: options.on_phase,
        records,
        handles: Vec::new(),
        images: Vec::new(),
        events: Vec::new(),
        timings: Vec::new(),
        metadata: BTreeMap::new(),
    };

    let failure = run.execute().err();
    run.cleanup();

    // Bundled images travel inside a pulled one; list them too.
    if failure.as_ref().is_none_or(|f| !f.phase.starts_with("pull")) {
        let pulled_at = run.images.last().map(|i| i.pulled_at_ms).unwrap_or(t0);
        for (id, rec) in &run.records {
            if !run.images.iter().any(|i| &i.image == id) {
                run.images.push(ImageUse {
                    image: id.clone(),
                    digest: rec.digest.clone(),
                    registry: rec.registry.clone(),
                    pulled_at_ms: pulled_at,
                });
            }
        }
    }
    run.metadata.insert("engine".into(), BTreeMap::from([("engine_id".to_string(), engine_id)]));

    let outcome = match &failure {
        None => Outcome::Succeeded,
        Some(f) if f.aborted => Outcome::Aborted,
        Some(_) => Outcome::Failed,
    };
    let record = RunRecord {
        run_id: run_id.clone(),
        workflow_name: plan.workflow_name.clone(),
        strategy: plan.strategy,
        environment_label: plan.environment_label.clone(),
        prov_service: plan.prov_service.clone(),
        started_at,
        finished_at: now_rfc3339(),
        duration_ms: run.engine.now_ms() - t0,
        plan: plan.clone(),
        images: run.images,
        container_events: run.events,
        activity_timings: run.timings,
        host_metadata: run.metadata,
        outcome,
        failure_phase: failure.as_ref().map(|f| f.phase.clone()),
        failure_reason: failure.as_ref().map(|f| f.reason.clone()),
        attachments: options.attachments,
    };
    catalog.record_run(&record)?;
    write_json_atomic(&run_dir.join(STATUS_FILE), &RunStatus::from_record(&record))?;

    match outcome {
        Outcome::Failed => return Err(DeployError::RunFailed { record: Box::new(record) }),
        Outcome::Aborted => return Err(DeployError::Aborted { record: Box::new(record) }),
        Outcome::Succeeded => {}
    }
    let research_object = if options.no_wrap {
        None
    } else {
        let path = options.research_object.unwrap_or_else(|| run_dir.join(RESEARCH_OBJECT_FILE));
        build_research_object(&record, catalog, &path)
            .map_err(|source| DeployError::Wrap { run_id: run_id.clone(), source })?;
        Some(path)
    };
    Ok(DeployReport { record, research_object })
}

/// Snapshot of a live or finished run.
pub fn status(catalog: &Catalog, run_id: &str) -> Result<RunStatus, DeployError> {
    if let Some(record) = catalog.run(run_id)? {
        return Ok(RunStatus::from_record(&record));
    }
    let path = catalog.run_dir(run_id).join(STATUS_FILE);
    if !crate::catalog::is_identifier(run_id) || !path.exists() {
        return Err(DeployError::UnknownRun(run_id.to_string()));
    }
    Ok(read_json(&path)?)
}

/// Asks the orchestrator of a live run to stop after the current phase.
pub fn request_abort(catalog: &Catalog, run_id: &str) -> Result<(), DeployError> {
    let st = status(catalog, run_id)?;
    if st.is_terminal() {
        return Err(DeployError::AlreadyTerminal(run_id.to_string()));
    }
    let marker = catalog.run_dir(run_id).join(ABORT_FILE);
    fs::write(&marker, b"").map_err(io_err(&marker))
}

/// Requests an abort and waits for the orchestrator to persist the record.
pub fn abort_run(catalog: &Catalog, run_id: &str, wait: Duration) -> Result<RunRecord, DeployError> {
    request_abort(catalog, run_id)?;
    let deadline = Instant::now() + wait;
    loop {
        if let Some(record) = catalog.run(run_id)? {
            return Ok(record);
        }
        if Instant::now() >= deadline {
            return Err(DeployError::AbortTimeout(run_id.to_string()));
        }
        std::thread::sleep(Duration::from_millis(50));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{SimActivity, SimContainer, SimScenario, SimulatedEngine};
    use crate::planner::build_plan;
    use crate::planner::tests::denseed_catalog;
    use crate::workflow::tests::denseed;

    fn scripted(durations: &[(&str, u64)]) -> SimScenario {
        let mut s = SimScenario::default();
        for (a, d) in durations {
            s.activities.insert(a.to_string(), SimActivity { duration_ms: *d, ..Default::default() });
        }
        s
    }

    fn opts<'a>(id: &str) -> DeployOptions<'a> {
        DeployOptions { run_id: Some(id.into()), no_wrap: true, ..Default::default() }
    }

    #[test]
    fn provenance_modular_run_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let cat = denseed_catalog(dir.path());
        let spec = denseed(Strategy::ProvenanceModular);
        let plan = build_plan(&spec, &cat).unwrap();
        let mut eng = SimulatedEngine::new(scripted(&[("preprocess", 2000), ("train", 5000), ("evaluate", 3000)]));
        let report = deploy(&spec, &plan, &mut eng, &cat, opts("r1")).unwrap();
        let rec = report.record;
        assert_eq!(rec.outcome, Outcome::Succeeded);
        assert_eq!(rec.activity_total_ms(), 10_000);
        assert!(rec.invariant_violations().is_empty(), "{:?}", rec.invariant_violations());
        let ready = |c: &str| {
            rec.container_events.iter().find(|e| e.container == c && e.event == EventKind::Ready).unwrap().at_ms
        };
        assert!(ready("monetdb") < ready("dfanalyzer"));
        assert!(ready("dfanalyzer") < rec.activity_timings[0].start_ms);
        assert_eq!(cat.run("r1").unwrap().unwrap(), rec);
        assert!(cat.run_dir("r1").join("logs/train.stdout").exists());
        assert_eq!(status(&cat, "r1").unwrap().outcome, Some(Outcome::Succeeded));
    }

    #[test]
    fn readiness_timeout_fails_and_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let cat = denseed_catalog(dir.path());
        let spec = denseed(Strategy::ProvenanceModular);
        let plan = build_plan(&spec, &cat).unwrap();
        let mut sc = SimScenario::default();
        sc.containers.insert("dfanalyzer".into(), SimContainer { never_ready: true, ..Default::default() });
        let mut eng = SimulatedEngine::new(sc);
        let err = deploy(&spec, &plan, &mut eng, &cat, opts("r2")).unwrap_err();
        let rec = err.record().unwrap();
        assert_eq!(rec.outcome, Outcome::Failed);
        assert_eq!(rec.failure_phase.as_deref(), Some("await_ready(dfanalyzer)"));
        assert!(rec.activity_timings.is_empty());
        assert!(rec.invariant_violations().is_empty(), "{:?}", rec.invariant_violations());
        let last = rec.container_events.last().unwrap();
        assert_eq!((last.container.as_str(), last.event), ("monetdb", EventKind::Stopped));
        assert!(cat.run("r2").unwrap().is_some());
    }

    #[test]
    fn nonzero_exit_is_fail_fast() {
        let dir = tempfile::tempdir().unwrap();
        let cat = denseed_catalog(dir.path());
        let spec = denseed(Strategy::ProvenanceModular);
        let plan = build_plan(&spec, &cat).unwrap();
        let mut sc = SimScenario::default();
        sc.activities.insert("train".into(), SimActivity { exit_code: 1, ..Default::default() });
        let mut eng = SimulatedEngine::new(sc);
        let rec = *match deploy(&spec, &plan, &mut eng, &cat, opts("r3")) {
            Err(DeployError::RunFailed { record }) => record,
            other => panic!("{other:?}"),
        };
        let names: Vec<_> = rec.activity_timings.iter().map(|t| t.activity.as_str()).collect();
        assert_eq!(names, ["preprocess", "train"]);
        assert_eq!(rec.failure_phase.as_deref(), Some("run_activity(train)"));
        let stops: Vec<_> = rec
            .container_events
            .iter()
            .filter(|e| e.event == EventKind::Stopped)
            .map(|e| e.container.as_str())
            .collect();
        assert_eq!(stops, ["denseed", "dfanalyzer", "monetdb"]);
        assert!(rec.invariant_violations().is_empty());
    }

    #[test]
    fn status_mid_run_and_abort() {
        let dir = tempfile::tempdir().unwrap();
        let cat = denseed_catalog(dir.path());
        let spec = denseed(Strategy::ProvenanceModular);
        let plan = build_plan(&spec, &cat).unwrap();
        let mut eng = SimulatedEngine::new(SimScenario::default());
        let mut seen = Vec::new();
        let hook_cat = cat.clone();
        let options = DeployOptions {
            run_id: Some("r4".into()),
            on_phase: Some(Box::new(|st: &RunStatus| {
                let live = status(&hook_cat, "r4").unwrap();
                assert_eq!(&live, st);
                seen.push(live.current_phase.clone().unwrap());
                if live.current_phase.as_deref() == Some("run_activity(preprocess)") {
                    assert!(live.containers.values().all(|s| *s != ContainerState::Stopped));
                    request_abort(&hook_cat, "r4").unwrap();
                }
            })),
            ..Default::default()
        };
        let err = deploy(&spec, &plan, &mut eng, &cat, options).unwrap_err();
        let rec = err.record().unwrap().clone();
        assert_eq!(rec.outcome, Outcome::Aborted);
        assert!(rec.activity_timings.is_empty());
        assert!(seen.contains(&"run_activity(preprocess)".to_string()));
        assert!(rec.invariant_violations().is_empty(), "{:?}", rec.invariant_violations());
        let st = status(&cat, "r4").unwrap();
        assert_eq!(st.outcome, Some(Outcome::Aborted));
        assert!(matches!(request_abort(&cat, "r4"), Err(DeployError::AlreadyTerminal(_))));
        assert!(matches!(abort_run(&cat, "r4", Duration::ZERO), Err(DeployError::AlreadyTerminal(_))));
        assert!(matches!(status(&cat, "nope"), Err(DeployError::UnknownRun(_))));
    }

    #[test]
    fn run_ids_sort_by_time() {
        let id = new_run_id();
        assert_eq!(id.len(), "20240101T000000Z-abcdef".len());
        assert!(crate::catalog::is_identifier(&id));
    }
}

//! Turns a validated workflow spec into an ordered deployment plan.
//!
//! Non-coarse plans bring the provenance stack up first (DBMS groups, then
//! provenance-service groups, each started and probed), then walk the
//! activities in `order_index` order, starting each workflow container when
//! its first activity is due and stopping it after its last one. The
//! provenance stack is stopped last, in reverse start order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{
    closure_order, Catalog, CatalogError, ImageId, PortSpec, ProvenanceServiceRecord, ReadinessProbe, StoredImage,
    VolumeSpec,
};
use crate::workflow::{
    infer_strategy, validate_against_catalog, ContainerGroup, GroupRole, SpecError, Strategy, WorkflowSpec,
};

pub const DEFAULT_PORT_BASE: u16 = 49152;
/// Probe used for DBMS groups that publish a port but declare no probe.
const DBMS_PROBE_TIMEOUT_SECS: f64 = 60.0;
const DBMS_PROBE_INTERVAL_SECS: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("the spec names no provenance service and the catalog has no default")]
    NoDefaultProvService,
    #[error("unknown provenance service `{0}`")]
    UnknownProvService(String),
    #[error("provenance service `{service}` runs from image {image}, which no prov_service group deploys")]
    ProvServiceNotDeployed { service: String, image: ImageId },
    #[error("host port {port} is requested by both `{first}` and `{second}`")]
    PortCollision { port: u16, first: String, second: String },
    #[error("no free host port at or above {0}")]
    PortsExhausted(u16),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Pull,
    StartContainer,
    AwaitReady,
    RunActivity,
    StopContainer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    pub container: String,
    pub image: ImageId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<String>,
    /// Command line of a `run_activity` phase.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub argv: Vec<String>,
}

impl Phase {
    fn new(kind: PhaseKind, container: &str, image: &ImageId) -> Self {
        Self { kind, container: container.to_string(), image: image.clone(), activity: None, argv: Vec::new() }
    }

    /// Short label such as `await_ready(dfanalyzer)` or `run_activity(train)`.
    pub fn label(&self) -> String {
        let kind =
            serde_json::to_value(self.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        match (&self.kind, &self.activity) {
            (PhaseKind::RunActivity, Some(a)) => format!("{kind}({a})"),
            (PhaseKind::Pull, _) => format!("{kind}({})", self.image),
            _ => format!("{kind}({})", self.container),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOptions {
    /// First host port tried for auto-assignment.
    pub port_base: u16,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self { port_base: DEFAULT_PORT_BASE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub run_label: String,
    pub workflow_name: String,
    pub environment_label: String,
    pub strategy: Strategy,
    /// Provenance service used; never unset.
    pub prov_service: String,
    /// True when `prov_service` came from the catalog default.
    pub prov_service_injected: bool,
    pub phases: Vec<Phase>,
    /// Activities in execution order.
    pub activity_order: Vec<String>,
    /// Role of each container.
    pub roles: BTreeMap<String, GroupRole>,
    pub port_assignments: BTreeMap<String, Vec<PortSpec>>,
    pub volume_assignments: BTreeMap<String, Vec<VolumeSpec>>,
    /// Commands run when a container starts, bundled services first.
    pub entry_sequences: BTreeMap<String, Vec<Vec<String>>>,
    pub readiness: BTreeMap<String, ReadinessProbe>,
    /// Digest of every image as it stood when the plan was built.
    pub image_digests: BTreeMap<ImageId, String>,
}

impl DeploymentPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Containers in start order.
    pub fn containers(&self) -> Vec<&str> {
        self.phases.iter().filter(|p| p.kind == PhaseKind::StartContainer).map(|p| p.container.as_str()).collect()
    }

    pub fn is_prov_stack(&self, container: &str) -> bool {
        matches!(self.roles.get(container), Some(GroupRole::ProvService | GroupRole::Dbms))
    }
}

/// Builds a plan against the catalog: resolves images, the provenance
/// service (injecting the catalog default when the spec names none) and
/// host ports.
pub fn build_plan(spec: &WorkflowSpec, catalog: &Catalog) -> Result<DeploymentPlan, PlanError> {
    build_plan_with(spec, catalog, PlanOptions::default())
}

pub fn build_plan_with(
    spec: &WorkflowSpec,
    catalog: &Catalog,
    options: PlanOptions,
) -> Result<DeploymentPlan, PlanError> {
    spec.validate()?;
    infer_strategy(spec)?;
    let mut closure = validate_against_catalog(spec, catalog)?;

    let (service, injected) = match &spec.prov_service {
        Some(name) => (catalog.prov_service(name)?.ok_or_else(|| PlanError::UnknownProvService(name.clone()))?, false),
        None => (catalog.default_prov_service()?.ok_or(PlanError::NoDefaultProvService)?, true),
    };
    let service_image = catalog.resolve_ref(&service.image)?;
    closure.extend(catalog.resolve_image_closure(&service_image)?);

    let mut images = BTreeMap::new();
    for id in closure {
        if let std::collections::btree_map::Entry::Vacant(slot) = images.entry(id) {
            let stored =
                catalog.image(slot.key())?.ok_or_else(|| CatalogError::UnknownImage(slot.key().to_string()))?;
            slot.insert(stored);
        }
    }
    let mut group_images = BTreeMap::new();
    for g in &spec.container_groups {
        group_images.insert(g.name.clone(), catalog.resolve_ref(&g.image)?);
    }
    plan_from_parts(
        spec,
        &PlanInputs {
            images: &images,
            group_images: &group_images,
            service: &service,
            service_image: &service_image,
            injected,
        },
        options,
    )
}

/// Everything the planner reads from the catalog, resolved up front.
pub struct PlanInputs<'a> {
    pub images: &'a BTreeMap<ImageId, StoredImage>,
    /// Image of each container group.
    pub group_images: &'a BTreeMap<String, ImageId>,
    pub service: &'a ProvenanceServiceRecord,
    pub service_image: &'a ImageId,
    pub injected: bool,
}

/// Pure planning step over pre-resolved inputs.
pub fn plan_from_parts(
    spec: &WorkflowSpec,
    inputs: &PlanInputs<'_>,
    options: PlanOptions,
) -> Result<DeploymentPlan, PlanError> {
    let strategy = infer_strategy(spec)?;
    let graph: BTreeMap<ImageId, Vec<ImageId>> =
        inputs.images.iter().map(|(id, img)| (id.clone(), img.resolved_deps.clone())).collect();
    let image_of = |g: &ContainerGroup| inputs.group_images[&g.name].clone();

    let ordered = spec.ordered_activities();
    let groups_by_role = |role| spec.container_groups.iter().filter(move |g| g.role == role);

    // Start order: DBMS, provenance service, then workflow containers by first activity.
    let mut start_order: Vec<&ContainerGroup> = Vec::new();
    if strategy == Strategy::CoarseGrained {
        start_order.push(&spec.container_groups[0]);
    } else {
        start_order.extend(groups_by_role(GroupRole::Dbms));
        start_order.extend(groups_by_role(GroupRole::ProvService));
        for act in &ordered {
            let owner = spec.owner_of(&act.name).expect("validated spec assigns every activity");
            if !start_order.iter().any(|g| g.name == owner.name) {
                start_order.push(owner);
            }
        }
        if !groups_by_role(GroupRole::ProvService).any(|g| image_of(g) == *inputs.service_image) {
            return Err(PlanError::ProvServiceNotDeployed {
                service: inputs.service.service_name.clone(),
                image: inputs.service_image.clone(),
            });
        }
    }

    // Images each container bundles: its closure minus images that run in
    // their own container. A coarse container also bundles the service stack.
    let deployed: BTreeSet<ImageId> = start_order.iter().map(|g| image_of(g)).collect();
    let mut bundles: BTreeMap<String, Vec<ImageId>> = BTreeMap::new();
    for g in &start_order {
        let own = image_of(g);
        let mut members = Vec::new();
        let mut roots = Vec::new();
        if strategy == Strategy::CoarseGrained {
            roots.push(inputs.service_image.clone());
        }
        roots.push(own.clone());
        for root in roots {
            for m in closure_order(&graph, &root)? {
                if (m == own || !deployed.contains(&m)) && !members.contains(&m) {
                    members.push(m);
                }
            }
        }
        bundles.insert(g.name.clone(), members);
    }

    let mut plan = DeploymentPlan {
        run_label: format!("{}-{}", spec.workflow_name, strategy),
        workflow_name: spec.workflow_name.clone(),
        environment_label: spec.environment_label.clone(),
        strategy,
        prov_service: inputs.service.service_name.clone(),
        prov_service_injected: inputs.injected,
        phases: Vec::new(),
        activity_order: ordered.iter().map(|a| a.name.clone()).collect(),
        roles: BTreeMap::new(),
        port_assignments: BTreeMap::new(),
        volume_assignments: BTreeMap::new(),
        entry_sequences: BTreeMap::new(),
        readiness: BTreeMap::new(),
        image_digests: BTreeMap::new(),
    };

    let mut requested_ports: Vec<(String, PortSpec)> = Vec::new();
    for g in &start_order {
        let role = if strategy == Strategy::CoarseGrained { GroupRole::Workflow } else { g.role };
        plan.roles.insert(g.name.clone(), role);
        let mut entry = Vec::new();
        let mut volumes: Vec<VolumeSpec> = Vec::new();
        let mut ports: Vec<PortSpec> = Vec::new();
        for member in &bundles[&g.name] {
            let rec = &inputs.images[member].record;
            plan.image_digests.insert(member.clone(), rec.digest.clone());
            if !rec.start_command.is_empty() {
                entry.push(rec.start_command.clone());
            }
            for v in &rec.volumes {
                if !volumes.contains(v) {
                    volumes.push(v.clone());
                }
            }
            for p in &rec.ports {
                if !ports.iter().any(|q| q.container_port == p.container_port) {
                    ports.push(*p);
                }
            }
        }
        if role == GroupRole::Workflow {
            for d in &spec.datasets {
                if !volumes.contains(d) {
                    volumes.push(d.clone());
                }
            }
        }
        requested_ports.extend(ports.iter().map(|p| (g.name.clone(), *p)));
        plan.entry_sequences.insert(g.name.clone(), entry);
        plan.volume_assignments.insert(g.name.clone(), volumes);

        let probe = match g.role {
            _ if strategy == Strategy::CoarseGrained => None,
            GroupRole::Workflow => None,
            _ if g.readiness.is_some() => g.readiness.clone(),
            GroupRole::ProvService if image_of(g) == *inputs.service_image => Some(inputs.service.readiness.clone()),
            _ => ports
                .first()
                .map(|p| ReadinessProbe::tcp(p.container_port, DBMS_PROBE_TIMEOUT_SECS, DBMS_PROBE_INTERVAL_SECS)),
        };
        if let Some(probe) = probe {
            plan.readiness.insert(g.name.clone(), probe);
        }
    }
    plan.port_assignments = assign_ports(&requested_ports, options.port_base)?;

    // Phases.
    let mut pulled = BTreeSet::new();
    for g in &start_order {
        let img = image_of(g);
        if pulled.insert(img.clone()) {
            plan.phases.push(Phase::new(PhaseKind::Pull, &g.name, &img));
        }
    }
    let stack: Vec<&ContainerGroup> = if strategy == Strategy::CoarseGrained {
        Vec::new()
    } else {
        start_order.iter().copied().filter(|g| g.role != GroupRole::Workflow).collect()
    };
    for g in &stack {
        plan.phases.push(Phase::new(PhaseKind::StartContainer, &g.name, &image_of(g)));
        plan.phases.push(Phase::new(PhaseKind::AwaitReady, &g.name, &image_of(g)));
    }
    let mut running = BTreeSet::new();
    for (i, act) in ordered.iter().enumerate() {
        let owner = spec.owner_of(&act.name).expect("validated spec assigns every activity");
        let img = image_of(owner);
        if running.insert(owner.name.clone()) {
            plan.phases.push(Phase::new(PhaseKind::StartContainer, &owner.name, &img));
        }
        let mut run = Phase::new(PhaseKind::RunActivity, &owner.name, &img);
        run.activity = Some(act.name.clone());
        run.argv = act.argv();
        plan.phases.push(run);
        let last_for_owner =
            ordered[i + 1..].iter().all(|later| spec.owner_of(&later.name).map(|o| &o.name) != Some(&owner.name));
        if last_for_owner {
            plan.phases.push(Phase::new(PhaseKind::StopContainer, &owner.name, &img));
        }
    }
    for g in stack.iter().rev() {
        plan.phases.push(Phase::new(PhaseKind::StopContainer, &g.name, &image_of(g)));
    }

    validate_plan(&plan)?;
    Ok(plan)
}

/// Keeps explicit host ports and assigns the rest upward from `base`.
fn assign_ports(requested: &[(String, PortSpec)], base: u16) -> Result<BTreeMap<String, Vec<PortSpec>>, PlanError> {
    let mut owners: BTreeMap<u16, &str> = BTreeMap::new();
    for (container, p) in requested {
        if p.host_port != 0 {
            if let Some(first) = owners.insert(p.host_port, container) {
                return Err(PlanError::PortCollision {
                    port: p.host_port,
                    first: first.to_string(),
                    second: container.clone(),
                });
            }
        }
    }
    let mut out: BTreeMap<String, Vec<PortSpec>> = BTreeMap::new();
    let mut cursor = u32::from(base.max(1));
    for (container, p) in requested {
        let host_port = if p.host_port != 0 {
            p.host_port
        } else {
            while cursor <= u32::from(u16::MAX) && owners.contains_key(&(cursor as u16)) {
                cursor += 1;
            }
            if cursor > u32::from(u16::MAX) {
                return Err(PlanError::PortsExhausted(base));
            }
            let port = cursor as u16;
            owners.insert(port, container);
            cursor += 1;
            port
        };
        out.entry(container.clone()).or_default().push(PortSpec { container_port: p.container_port, host_port });
    }
    Ok(out)
}

/// Checks every plan invariant; the error names the one violated.
pub fn validate_plan(plan: &DeploymentPlan) -> Result<(), PlanError> {
    let bad = |what: &str| Err(PlanError::InvalidPlan(what.to_string()));
    if plan.prov_service.is_empty() {
        return bad("provenance service unset");
    }

    #[derive(PartialEq)]
    enum State {
        Started,
        Ready,
        Stopped,
    }
    let mut state: BTreeMap<&str, State> = BTreeMap::new();
    let mut starts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut pulled = BTreeSet::new();
    let mut activities = Vec::new();
    let mut last_stack_ready = None;
    let mut first_activity = None;

    for (i, phase) in plan.phases.iter().enumerate() {
        let c = phase.container.as_str();
        match phase.kind {
            PhaseKind::Pull => {
                if !pulled.insert(&phase.image) {
                    return bad("image pulled twice");
                }
            }
            PhaseKind::StartContainer => {
                if !pulled.contains(&phase.image) {
                    return bad("start before pull");
                }
                if state.contains_key(c) {
                    return bad("unbalanced start/stop");
                }
                state.insert(c, State::Started);
                *starts.entry(c).or_default() += 1;
            }
            PhaseKind::AwaitReady => match state.get(c) {
                Some(State::Started) => {
                    state.insert(c, State::Ready);
                    if plan.is_prov_stack(c) {
                        last_stack_ready = Some(i);
                    }
                }
                _ => return bad("await_ready outside a started container"),
            },
            PhaseKind::RunActivity => {
                match state.get(c) {
                    Some(State::Started | State::Ready) => {}
                    _ => return bad("activity before start"),
                }
                if plan.roles.get(c) != Some(&GroupRole::Workflow) {
                    return bad("activity in a non-workflow container");
                }
                first_activity.get_or_insert(i);
                activities.push(phase.activity.clone().unwrap_or_default());
            }
            PhaseKind::StopContainer => match state.get(c) {
                Some(State::Started | State::Ready) => {
                    state.insert(c, State::Stopped);
                }
                _ => return bad("unbalanced start/stop"),
            },
        }
    }
    if state.values().any(|s| *s != State::Stopped) {
        return bad("unbalanced start/stop");
    }
    if activities != plan.activity_order {
        return bad("activities out of order");
    }
    if plan.strategy == Strategy::CoarseGrained {
        if starts.len() != 1 {
            return bad("coarse-grained plan must use exactly one container");
        }
    } else {
        for (c, role) in &plan.roles {
            if *role != GroupRole::Workflow && plan.readiness.contains_key(c.as_str()) {
                let awaited = plan.phases.iter().any(|p| p.kind == PhaseKind::AwaitReady && p.container == *c);
                if !awaited {
                    return bad("provenance stack container never awaited");
                }
            }
        }
        let stack_started =
            plan.phases.iter().position(|p| p.kind == PhaseKind::StartContainer && plan.is_prov_stack(&p.container));
        if let (Some(first), Some(start)) = (first_activity, stack_started) {
            if start > first || last_stack_ready.is_some_and(|r| r > first) {
                return bad("provenance stack not ready before first activity");
            }
        } else if stack_started.is_none() {
            return bad("provenance stack missing");
        }
    }
    let mut seen_ports = BTreeSet::new();
    for ports in plan.port_assignments.values() {
        for p in ports {
            if p.host_port == 0 || !seen_ports.insert(p.host_port) {
                return bad("host port unassigned or colliding");
            }
        }
    }
    Ok(())
}

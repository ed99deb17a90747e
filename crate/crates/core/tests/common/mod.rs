#![allow(dead_code)]

use std::path::Path;

use provforge::catalog::{
    sha256_digest, Catalog, ImageRecord, PortSpec, ProvenanceServiceRecord, ReadinessProbe, VolumeMode, VolumeSpec,
};
use provforge::engine::{SimActivity, SimScenario};
use provforge::workflow::{Activity, ContainerGroup, GroupRole, Strategy, WorkflowSpec};

pub const ACTIVITIES: [&str; 3] = ["preprocess", "train", "evaluate"];

pub fn image(name: &str, deps: &[&str], start: &[&str], ports: &[u16]) -> ImageRecord {
    ImageRecord {
        name: name.into(),
        tag: "1.0".into(),
        registry: "docker.io/example".into(),
        digest: sha256_digest(name.as_bytes()),
        description: String::new(),
        definition_ref: None,
        definition_version: 1,
        volumes: vec![],
        ports: ports.iter().map(|&p| PortSpec { container_port: p, host_port: 0 }).collect(),
        start_command: start.iter().map(|s| s.to_string()).collect(),
        software_stack: vec![],
        depends_on: deps.iter().map(|d| d.to_string()).collect(),
    }
}

/// MonetDB, FastBit, DfAnalyzer (on both) and DenseED, plus the DfAnalyzer
/// service. MonetDB keeps its dbfarm under `root/dbfarm`.
pub fn denseed_catalog(root: &Path) -> Catalog {
    let cat = Catalog::open(root).unwrap();
    let mut monet = image("MonetDB", &[], &["monetdbd", "start", "/var/monetdb5/dbfarm"], &[50000]);
    monet.volumes.push(VolumeSpec {
        host_path: root.join("dbfarm").to_string_lossy().into_owned(),
        container_path: "/var/monetdb5/dbfarm".into(),
        mode: VolumeMode::ReadWrite,
    });
    cat.register_image(monet).unwrap();
    cat.register_image(image("FastBit", &[], &[], &[])).unwrap();
    cat.register_image(image("DfAnalyzer", &["MonetDB", "FastBit"], &["/opt/dfa/start.sh"], &[22000])).unwrap();
    cat.register_image(image("DenseED", &[], &[], &[])).unwrap();
    cat.register_prov_service(ProvenanceServiceRecord {
        image: "DfAnalyzer".into(),
        service_name: "DfAnalyzer".into(),
        requires_instrumentation: true,
        readiness: ReadinessProbe::tcp(22000, 10.0, 1.0),
        is_default: true,
    })
    .unwrap();
    cat
}

pub fn group(name: &str, image: &str, role: GroupRole, acts: &[&str]) -> ContainerGroup {
    ContainerGroup {
        name: name.into(),
        image: image.into(),
        activities: acts.iter().map(|a| a.to_string()).collect(),
        role,
        readiness: None,
    }
}

pub fn activities(names: &[&str]) -> Vec<Activity> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| Activity {
            name: n.to_string(),
            script: format!("/workflow/{n}.py"),
            arguments: vec![],
            order_index: i as u32,
        })
        .collect()
}

/// The three-activity DenseED workflow laid out for `strategy`.
pub fn denseed(strategy: Strategy) -> WorkflowSpec {
    let all = ACTIVITIES;
    let container_groups = match strategy {
        Strategy::CoarseGrained => vec![group("denseed", "DenseED", GroupRole::Workflow, &all)],
        Strategy::PartialModular => vec![
            group("denseed", "DenseED", GroupRole::Workflow, &all),
            group("provenance", "DfAnalyzer", GroupRole::ProvService, &[]),
        ],
        Strategy::ProvenanceModular => vec![
            group("denseed", "DenseED", GroupRole::Workflow, &all),
            group("dfanalyzer", "DfAnalyzer", GroupRole::ProvService, &[]),
            group("monetdb", "MonetDB", GroupRole::Dbms, &[]),
        ],
        Strategy::FineGrained => vec![
            group("preprocess", "DenseED", GroupRole::Workflow, &["preprocess"]),
            group("train", "DenseED", GroupRole::Workflow, &["train"]),
            group("evaluate", "DenseED", GroupRole::Workflow, &["evaluate"]),
            group("dfanalyzer", "DfAnalyzer", GroupRole::ProvService, &[]),
            group("monetdb", "MonetDB", GroupRole::Dbms, &[]),
        ],
        Strategy::HybridOther => vec![
            group("prep", "DenseED", GroupRole::Workflow, &["preprocess"]),
            group("rest", "DenseED", GroupRole::Workflow, &["train", "evaluate"]),
            group("dfanalyzer", "DfAnalyzer", GroupRole::ProvService, &[]),
        ],
    };
    WorkflowSpec {
        workflow_name: "DenseED".into(),
        strategy,
        prov_service: None,
        activities: activities(&all),
        container_groups,
        datasets: vec![],
        environment_label: "gpu-node".into(),
    }
}

pub fn scripted(durations: &[(&str, u64)]) -> SimScenario {
    let mut s = SimScenario::default();
    for (a, d) in durations {
        s.activities.insert(a.to_string(), SimActivity { duration_ms: *d, ..Default::default() });
    }
    s
}

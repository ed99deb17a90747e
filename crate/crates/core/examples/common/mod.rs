#![allow(dead_code)]

use std::path::{Path, PathBuf};

use provforge::catalog::{
    sha256_digest, Catalog, ImageRecord, PortSpec, ProvenanceServiceRecord, ReadinessProbe, VolumeMode, VolumeSpec,
};
use provforge::workflow::{parse_spec, WorkflowSpec};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn image(name: &str, tag: &str, deps: &[&str], start: &[&str], ports: &[u16]) -> ImageRecord {
    ImageRecord {
        name: name.into(),
        tag: tag.into(),
        registry: "docker.io/example".into(),
        digest: sha256_digest(format!("{name}:{tag}").as_bytes()),
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

/// Catalog under `root/catalog` holding the DenseED workflow image and the
/// DfAnalyzer provenance stack (DfAnalyzer on MonetDB and FastBit).
pub fn denseed_catalog(root: &Path) -> Catalog {
    let cat = Catalog::open(root.join("catalog")).unwrap();
    let mut monet = image("MonetDB", "11.45", &[], &["monetdbd", "start", "/var/monetdb5/dbfarm"], &[50000]);
    monet.volumes.push(VolumeSpec {
        host_path: root.join("dbfarm").to_string_lossy().into_owned(),
        container_path: "/var/monetdb5/dbfarm".into(),
        mode: VolumeMode::ReadWrite,
    });
    let mut dfa =
        image("DfAnalyzer", "1.0", &["MonetDB", "FastBit"], &["/opt/dfanalyzer/start-dfanalyzer.sh"], &[22000]);
    dfa.definition_ref = Some(fixtures().join("definitions/dfanalyzer.def").to_string_lossy().into_owned());
    for record in [monet, image("FastBit", "2.0", &[], &[], &[]), dfa, image("DenseED", "1.0", &[], &[], &[])] {
        cat.register_image(record).unwrap();
    }
    cat.register_prov_service(ProvenanceServiceRecord {
        image: "DfAnalyzer:1.0".into(),
        service_name: "DfAnalyzer".into(),
        requires_instrumentation: true,
        readiness: ReadinessProbe::tcp(22000, 60.0, 1.0),
        is_default: true,
    })
    .unwrap();
    cat
}

/// One of the fixture specs (`coarse`, `partial`, `provenance`), with its
/// datasets moved under `root`.
pub fn denseed_spec(which: &str, root: &Path) -> WorkflowSpec {
    let path = fixtures().join(format!("specs/denseed-{which}.json"));
    let mut spec = parse_spec(&std::fs::read_to_string(path).unwrap()).unwrap();
    for d in &mut spec.datasets {
        d.host_path = root.join("data").to_string_lossy().into_owned();
    }
    spec
}

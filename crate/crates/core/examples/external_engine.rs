//! Drives the Docker preset through a recording runner and prints every
//! argument vector the engine would hand to the container CLI.

use std::collections::BTreeMap;

use provforge::catalog::{sha256_digest, ImageRecord, PortSpec, VolumeMode, VolumeSpec};
use provforge::engine::{
    CommandOutput, ContainerEngine, ExecRequest, ExternalConfig, ExternalEngine, Preset, RecordingRunner, StartRequest,
};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let image = ImageRecord {
        name: "monetdb".into(),
        tag: "11.45".into(),
        registry: "docker.io/monetdb".into(),
        digest: sha256_digest(b"monetdb"),
        description: String::new(),
        definition_ref: None,
        definition_version: 1,
        volumes: vec![],
        ports: vec![],
        start_command: vec![],
        software_stack: vec![],
        depends_on: vec![],
    };
    let volumes = [VolumeSpec {
        host_path: dir.path().join("dbfarm").to_string_lossy().into_owned(),
        container_path: "/var/monetdb5/dbfarm".into(),
        mode: VolumeMode::ReadWrite,
    }];
    let ports = [PortSpec { container_port: 50000, host_port: 55000 }];

    // Image not cached locally; every other command succeeds.
    let runner = RecordingRunner::new(|argv| match argv {
        [_, img, inspect, ..] if img == "image" && inspect == "inspect" => CommandOutput::failed(1, "no such image"),
        _ => CommandOutput::ok(""),
    });
    let config = ExternalConfig::preset(Preset::Docker);
    for (verb, template) in &config.templates {
        println!("{verb:?}: {}", template.join(" "));
    }
    let mut engine = ExternalEngine::new(config, Box::new(runner.clone()));

    engine.pull_image(&image).unwrap();
    let entry = vec![vec!["monetdbd".to_string(), "start".into(), "/var/monetdb5/dbfarm".into()]];
    let mut handle = engine
        .start_container(StartRequest {
            image: &image,
            name: "monetdb",
            volumes: &volumes,
            ports: &ports,
            entry: &entry,
        })
        .unwrap();
    engine.await_ready(&mut handle, None).unwrap();
    let argv = vec!["monetdb".to_string(), "--version".into()];
    let (stdout, stderr) = (dir.path().join("out"), dir.path().join("err"));
    let out = engine
        .run_in_container(&handle, ExecRequest { argv: &argv, label: "version", stdout: &stdout, stderr: &stderr })
        .unwrap();
    engine.stop_container(&mut handle).unwrap();

    println!();
    for call in runner.calls() {
        println!("$ {}", call.join(" "));
    }
    let meta: BTreeMap<String, String> = engine.collect_metadata(&handle);
    println!("exit {}, final state {:?}, {} metadata keys", out.exit_code, handle.state, meta.len());
}

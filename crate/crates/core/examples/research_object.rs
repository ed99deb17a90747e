//! Wraps a finished run, lists the archive manifest, verifies it, then
//! flips one byte and verifies again.

mod common;

use provforge::deployer::{deploy, DeployOptions};
use provforge::engine::EngineConfig;
use provforge::planner::build_plan;
use provforge::wrapper::{build_research_object, read_manifest, verify_research_object};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cat = common::denseed_catalog(dir.path());
    let spec = common::denseed_spec("provenance", dir.path());
    let plan = build_plan(&spec, &cat).unwrap();
    let mut engine = EngineConfig::load(&common::fixtures().join("engines/sim.json")).unwrap().build().unwrap();
    let options = DeployOptions { no_wrap: true, ..Default::default() };
    let run = deploy(&spec, &plan, engine.as_mut(), &cat, options).unwrap().record;

    let archive = dir.path().join("denseed.provro");
    build_research_object(&run, &cat, &archive).unwrap();
    let manifest = read_manifest(&archive).unwrap();
    println!("run {} ({} entries)", manifest.run_id, manifest.inventory.len());
    for entry in &manifest.inventory {
        println!("  {:>6}  {}  {}", entry.size, &entry.sha256[..19], entry.path);
    }
    println!("provenance database: {:?}", manifest.provenance_db);

    let report = verify_research_object(&archive).unwrap();
    println!("verify: {}", if report.ok() { "ok" } else { "FAILED" });

    let mut bytes = std::fs::read(&archive).unwrap();
    let at = bytes.len() / 2;
    bytes[at] ^= 0x01;
    std::fs::write(&archive, bytes).unwrap();
    match verify_research_object(&archive) {
        Ok(r) => println!("after flipping byte {at}: {:?}", r.violations),
        Err(e) => println!("after flipping byte {at}: {e}"),
    }
}

//! Runs DenseED on the simulated engine with the scripted timings from
//! `fixtures/engines/sim.json` and prints the container provenance.

mod common;

use provforge::deployer::{deploy, DeployOptions};
use provforge::engine::EngineConfig;
use provforge::planner::build_plan;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cat = common::denseed_catalog(dir.path());
    let config = EngineConfig::load(&common::fixtures().join("engines/sim.json")).unwrap();

    for which in ["coarse", "partial", "provenance"] {
        let spec = common::denseed_spec(which, dir.path());
        let plan = build_plan(&spec, &cat).unwrap();
        let mut engine = config.build().unwrap();
        let options = DeployOptions {
            on_phase: Some(Box::new(|st| {
                if let Some(p) = &st.current_phase {
                    eprintln!("  [{:>2}/{}] {p}", st.phase_index + 1, st.phase_count);
                }
            })),
            ..Default::default()
        };
        let report = deploy(&spec, &plan, engine.as_mut(), &cat, options).unwrap();
        let rec = &report.record;
        println!("{} {} {:?} total {} ms", rec.run_id, rec.strategy, rec.outcome, rec.duration_ms);
        for t in &rec.activity_timings {
            println!(
                "  {:<10} in {:<10} {:>6} ms  exit {}",
                t.activity,
                t.container,
                t.end_ms - t.start_ms,
                t.exit_code
            );
        }
        for e in &rec.container_events {
            println!("  {:>6} ms  {:<10} {:?}", e.at_ms, e.container, e.event);
        }
        println!("  research object: {}", report.research_object.unwrap().display());
    }
}

//! Injects a readiness timeout, a failing activity and an abort request into
//! simulated runs. Every run ends with its containers stopped and a record.

mod common;

use provforge::deployer::{self, deploy, DeployOptions};
use provforge::engine::{SimActivity, SimContainer, SimScenario, SimulatedEngine};
use provforge::planner::build_plan;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cat = common::denseed_catalog(dir.path());
    let spec = common::denseed_spec("provenance", dir.path());
    let plan = build_plan(&spec, &cat).unwrap();

    let mut never_ready = SimScenario::default();
    never_ready.containers.insert("dfanalyzer".into(), SimContainer { never_ready: true, ..Default::default() });
    let mut train_fails = SimScenario::default();
    train_fails
        .activities
        .insert("train".into(), SimActivity { exit_code: 137, stderr: "killed\n".into(), ..Default::default() });

    for (name, scenario, abort) in
        [("readiness", never_ready, false), ("exit code", train_fails, false), ("abort", SimScenario::default(), true)]
    {
        let run_id = format!("fault-{}", name.replace(' ', "-"));
        let hook_cat = cat.clone();
        let id = run_id.clone();
        let options = DeployOptions {
            run_id: Some(run_id.clone()),
            no_wrap: true,
            on_phase: Some(Box::new(move |st| {
                if abort && st.current_phase.as_deref() == Some("run_activity(train)") {
                    deployer::request_abort(&hook_cat, &id).unwrap();
                }
            })),
            ..Default::default()
        };
        let mut engine = SimulatedEngine::new(scenario);
        let err = deploy(&spec, &plan, &mut engine, &cat, options).unwrap_err();
        let rec = err.record().unwrap();
        println!("{name}: {err}");
        println!("  outcome {:?}, activities run {}", rec.outcome, rec.activity_timings.len());
        for e in &rec.container_events {
            println!("  {:>6} ms  {:<10} {:?}", e.at_ms, e.container, e.event);
        }
        assert!(rec.invariant_violations().is_empty());
        assert_eq!(cat.run(&run_id).unwrap().as_ref(), Some(rec));
    }
}

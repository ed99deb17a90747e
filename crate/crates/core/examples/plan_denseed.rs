//! Plans DenseED under the three strategies and prints the phase order.
//! The provenance stack is always up before the first activity.

mod common;

use provforge::planner::build_plan;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cat = common::denseed_catalog(dir.path());
    for which in ["coarse", "partial", "provenance"] {
        let spec = common::denseed_spec(which, dir.path());
        let plan = build_plan(&spec, &cat).unwrap();
        println!("{} ({} containers, service {})", plan.strategy.label(), plan.containers().len(), plan.prov_service);
        for phase in &plan.phases {
            println!("  {}", phase.label());
        }
        for (container, ports) in &plan.port_assignments {
            for p in ports {
                println!("  port {container}: {} -> {}", p.container_port, p.host_port);
            }
        }
    }
}

//! Classifies the fixture specs by container topology and shows what a
//! wrongly declared strategy looks like.

mod common;

use provforge::workflow::{classify_topology, infer_strategy, Strategy};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    for which in ["coarse", "partial", "provenance"] {
        let spec = common::denseed_spec(which, dir.path());
        let groups: Vec<String> = spec.container_groups.iter().map(|g| format!("{}[{:?}]", g.name, g.role)).collect();
        println!("{:<12} {:<20} {}", which, classify_topology(&spec).label(), groups.join(" "));
    }

    let mut spec = common::denseed_spec("partial", dir.path());
    spec.strategy = Strategy::FineGrained;
    println!("{}", infer_strategy(&spec).unwrap_err());
}

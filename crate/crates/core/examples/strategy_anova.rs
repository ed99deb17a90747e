//! One-way ANOVA over the published DenseED execution-time summaries, with
//! Bonferroni post-hoc comparisons.

mod common;

use provforge::analytics::{AnalysisReport, GroupSummary};
use serde::Deserialize;

#[derive(Deserialize)]
struct Table {
    workflow: String,
    environment: String,
    groups: Vec<GroupSummary>,
}

fn main() {
    for file in ["gpu", "cpu"] {
        let text = std::fs::read_to_string(common::fixtures().join(format!("timings/{file}.json"))).unwrap();
        let table: Table = serde_json::from_str(&text).unwrap();
        let report = AnalysisReport::from_summaries(&table.workflow, &table.environment, table.groups, 0.05).unwrap();
        println!("{}", report.to_text());
    }
}

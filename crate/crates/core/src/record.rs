//! Container provenance of one execution.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::ImageId;
use crate::planner::DeploymentPlan;
use crate::workflow::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Succeeded,
    Failed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Started,
    Ready,
    Stopped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerEvent {
    pub container: String,
    pub event: EventKind,
    /// Engine monotonic clock, milliseconds.
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageUse {
    pub image: ImageId,
    pub digest: String,
    pub registry: String,
    pub pulled_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityTiming {
    pub activity: String,
    pub container: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub exit_code: i32,
    /// Relative to the run directory.
    pub stdout_log: String,
    pub stderr_log: String,
}

/// External file attached to a run, e.g. a CPU profiler's output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub label: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub workflow_name: String,
    pub strategy: Strategy,
    pub environment_label: String,
    pub prov_service: String,
    /// Wall clock, RFC 3339 UTC with milliseconds.
    pub started_at: String,
    pub finished_at: String,
    /// End-to-end duration on the engine's monotonic clock.
    pub duration_ms: u64,
    pub plan: DeploymentPlan,
    pub images: Vec<ImageUse>,
    pub container_events: Vec<ContainerEvent>,
    pub activity_timings: Vec<ActivityTiming>,
    /// Per-container metadata plus an `engine` entry.
    pub host_metadata: BTreeMap<String, BTreeMap<String, String>>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_phase: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<Attachment>,
}

impl RunRecord {
    pub fn duration_minutes(&self) -> f64 {
        self.duration_ms as f64 / 60_000.0
    }

    pub fn activity_total_ms(&self) -> u64 {
        self.activity_timings.iter().map(|t| t.end_ms - t.start_ms).sum()
    }

    fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &ContainerEvent> {
        self.container_events.iter().filter(move |e| e.event == kind)
    }

    /// Names every violated record invariant; empty when the record is sound.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();

        let all_zero = self.activity_timings.iter().all(|t| t.exit_code == 0);
        let complete = self.activity_timings.len() == self.plan.activity_order.len();
        let succeeded = self.outcome == Outcome::Succeeded;
        if succeeded != (all_zero && complete && self.failure_phase.is_none()) {
            out.push("outcome disagrees with activity exit codes".to_string());
        }

        for pair in self.activity_timings.windows(2) {
            if pair[0].end_ms > pair[1].start_ms {
                out.push(format!("activities {} and {} overlap", pair[0].activity, pair[1].activity));
            }
        }
        if let Some(t) = self.activity_timings.iter().find(|t| t.end_ms < t.start_ms) {
            out.push(format!("activity {} ends before it starts", t.activity));
        }

        // Cleanup totality: every started container ends stopped or failed.
        for started in self.events_of(EventKind::Started) {
            let closed = self
                .container_events
                .iter()
                .any(|e| e.container == started.container && matches!(e.event, EventKind::Stopped | EventKind::Failed));
            if !closed {
                out.push(format!("container {} was started but never stopped", started.container));
            }
        }

        // Record completeness: every image the plan pulled, with a digest.
        let recorded: BTreeSet<&ImageId> =
            self.images.iter().filter(|i| !i.digest.is_empty()).map(|i| &i.image).collect();
        let pulled_ok = self.failure_phase.as_deref().is_none_or(|p| !p.starts_with("pull"));
        if pulled_ok {
            for phase in self.plan.phases.iter().filter(|p| p.kind == crate::planner::PhaseKind::Pull) {
                if !recorded.contains(&phase.image) {
                    out.push(format!("image {} missing from the record", phase.image));
                }
            }
        }

        if self.strategy != Strategy::CoarseGrained {
            let stack_ready = self
                .events_of(EventKind::Ready)
                .filter(|e| self.plan.is_prov_stack(&e.container))
                .map(|e| e.at_ms)
                .max();
            let first_activity = self.activity_timings.iter().map(|t| t.start_ms).min();
            if let (Some(ready), Some(first)) = (stack_ready, first_activity) {
                if first <= ready {
                    out.push("an activity started before the provenance stack was ready".to_string());
                }
            }
            if first_activity.is_some() && stack_ready.is_none() {
                out.push("activities ran without a ready provenance stack".to_string());
            }
        }
        out
    }
}

//! Workflow specification documents and containerization strategies.
//!
//! A spec assigns every activity to exactly one container group. The
//! strategy named in the document is declarative; [`infer_strategy`]
//! derives it from the group topology and refuses to proceed when the two
//! disagree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{is_identifier, Catalog, CatalogError, ImageId, ReadinessProbe, VolumeSpec};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("schema violation at `{path}`: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("unknown strategy `{0}` (expected coarse_grained, partial_modular, provenance_modular, fine_grained or hybrid_other)")]
    UnknownStrategy(String),
    #[error("declared strategy {declared} does not match the container topology, which is {inferred}")]
    StrategyMismatch { declared: Strategy, inferred: Strategy },
    #[error("unresolved image `{0}`")]
    UnresolvedImage(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

fn violation(path: impl Into<String>, reason: impl Into<String>) -> SpecError {
    SpecError::SchemaViolation { path: path.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One container holding the workflow and the whole provenance stack.
    CoarseGrained,
    /// Workflow container plus one container with provenance service and DBMS.
    PartialModular,
    /// Workflow, provenance service and DBMS in three containers.
    ProvenanceModular,
    /// One container per activity.
    FineGrained,
    HybridOther,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::CoarseGrained,
        Strategy::PartialModular,
        Strategy::ProvenanceModular,
        Strategy::FineGrained,
        Strategy::HybridOther,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::CoarseGrained => "coarse_grained",
            Strategy::PartialModular => "partial_modular",
            Strategy::ProvenanceModular => "provenance_modular",
            Strategy::FineGrained => "fine_grained",
            Strategy::HybridOther => "hybrid_other",
        }
    }

    /// Human label, as used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::CoarseGrained => "Coarse-grained",
            Strategy::PartialModular => "Partially modular",
            Strategy::ProvenanceModular => "Provenance modular",
            Strategy::FineGrained => "Fine-grained",
            Strategy::HybridOther => "Hybrid (other)",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        Strategy::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| SpecError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupRole {
    Workflow,
    ProvService,
    Dbms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Activity {
    pub name: String,
    /// Instrumented script, as seen inside the container.
    pub script: String,
    #[serde(default)]
    pub arguments: Vec<String>,
    pub order_index: u32,
}

impl Activity {
    pub fn argv(&self) -> Vec<String> {
        std::iter::once(self.script.clone()).chain(self.arguments.iter().cloned()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerGroup {
    pub name: String,
    /// Image reference: `name:tag` or a bare catalog name.
    pub image: String,
    #[serde(default)]
    pub activities: Vec<String>,
    pub role: GroupRole,
    /// Overrides the readiness check derived from the catalog.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readiness: Option<ReadinessProbe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    pub workflow_name: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prov_service: Option<String>,
    pub activities: Vec<Activity>,
    pub container_groups: Vec<ContainerGroup>,
    #[serde(default)]
    pub datasets: Vec<VolumeSpec>,
    #[serde(default)]
    pub environment_label: String,
}

/// Document shape before validation; `strategy` stays a string so unknown
/// values get their own error.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    workflow_name: String,
    strategy: String,
    #[serde(default)]
    prov_service: Option<String>,
    activities: Vec<Activity>,
    container_groups: Vec<ContainerGroup>,
    #[serde(default)]
    datasets: Vec<VolumeSpec>,
    #[serde(default)]
    environment_label: String,
}

/// Parses and validates a workflow spec document.
pub fn parse_spec(document: &str) -> Result<WorkflowSpec, SpecError> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let raw: RawSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        violation(path, e.into_inner().to_string())
    })?;
    let spec = WorkflowSpec {
        workflow_name: raw.workflow_name,
        strategy: raw.strategy.parse()?,
        prov_service: raw.prov_service,
        activities: raw.activities,
        container_groups: raw.container_groups,
        datasets: raw.datasets,
        environment_label: raw.environment_label,
    };
    spec.validate()?;
    Ok(spec)
}

impl WorkflowSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Activities sorted by `order_index`.
    pub fn ordered_activities(&self) -> Vec<&Activity> {
        let mut acts: Vec<_> = self.activities.iter().collect();
        acts.sort_by_key(|a| a.order_index);
        acts
    }

    /// Group owning each activity.
    pub fn owner_of(&self, activity: &str) -> Option<&ContainerGroup> {
        self.container_groups.iter().find(|g| g.activities.iter().any(|a| a == activity))
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if !is_identifier(&self.workflow_name) {
            return Err(violation("workflow_name", "must be an identifier"));
        }
        if let Some(svc) = &self.prov_service {
            if !is_identifier(svc) {
                return Err(violation("prov_service", "must be an identifier"));
            }
        }
        if self.activities.is_empty() {
            return Err(violation("activities", "at least one activity is required"));
        }
        if self.container_groups.is_empty() {
            return Err(violation("container_groups", "at least one container group is required"));
        }

        let mut names = BTreeSet::new();
        let mut indices = BTreeSet::new();
        for (i, a) in self.activities.iter().enumerate() {
            if !is_identifier(&a.name) {
                return Err(violation(format!("activities[{i}].name"), "must be an identifier"));
            }
            if !names.insert(a.name.as_str()) {
                return Err(violation(format!("activities[{i}].name"), format!("duplicate activity `{}`", a.name)));
            }
            if a.script.is_empty() {
                return Err(violation(format!("activities[{i}].script"), "must not be empty"));
            }
            if !indices.insert(a.order_index) {
                return Err(violation(
                    format!("activities[{i}].order_index"),
                    format!("order_index {} is used twice", a.order_index),
                ));
            }
        }
        let n = self.activities.len() as u32;
        if let Some(bad) = indices.iter().find(|&&ix| ix >= n) {
            return Err(violation("activities", format!("order_index values must be 0..{n}, found {bad}")));
        }

        let mut group_names = BTreeSet::new();
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for (i, g) in self.container_groups.iter().enumerate() {
            let path = format!("container_groups[{i}]");
            if !is_identifier(&g.name) {
                return Err(violation(format!("{path}.name"), "must be an identifier"));
            }
            if !group_names.insert(g.name.as_str()) {
                return Err(violation(format!("{path}.name"), format!("duplicate group `{}`", g.name)));
            }
            if g.image.is_empty() {
                return Err(violation(format!("{path}.image"), "must not be empty"));
            }
            match g.role {
                GroupRole::Workflow if g.activities.is_empty() => {
                    return Err(violation(format!("{path}.activities"), "a workflow group needs at least one activity"))
                }
                GroupRole::ProvService | GroupRole::Dbms if !g.activities.is_empty() => {
                    return Err(violation(format!("{path}.activities"), "only workflow groups hold activities"))
                }
                _ => {}
            }
            if let Some(probe) = &g.readiness {
                probe
                    .validate(&format!("{path}.readiness"))
                    .map_err(|e| violation(format!("{path}.readiness"), e.to_string()))?;
            }
            for (j, a) in g.activities.iter().enumerate() {
                if !names.contains(a.as_str()) {
                    return Err(violation(format!("{path}.activities[{j}]"), format!("unknown activity `{a}`")));
                }
                if let Some(prev) = owner.insert(a, &g.name) {
                    return Err(violation(
                        format!("{path}.activities[{j}]"),
                        format!("activity `{a}` is already assigned to group `{prev}`"),
                    ));
                }
            }
        }
        if let Some(orphan) = self.activities.iter().find(|a| !owner.contains_key(a.name.as_str())) {
            return Err(violation(
                "container_groups",
                format!("activity `{}` is not assigned to any group", orphan.name),
            ));
        }
        if self.container_groups.len() > 1 && !self.container_groups.iter().any(|g| g.role == GroupRole::ProvService) {
            return Err(violation("container_groups", "a multi-container deployment needs a prov_service group"));
        }
        for (i, v) in self.datasets.iter().enumerate() {
            v.validate(&format!("datasets[{i}]")).map_err(|e| violation(format!("datasets[{i}]"), e.to_string()))?;
        }
        Ok(())
    }
}

/// Strategy implied by the group topology alone.
///
/// Checked in order: a single group is coarse-grained; one workflow group
/// with one provenance-service group (DBMS bundled) is partial modular, or
/// with separate provenance-service and DBMS groups is provenance modular;
/// two or more activities each in their own workflow group is fine-grained;
/// anything else is `hybrid_other`.
pub fn classify_topology(spec: &WorkflowSpec) -> Strategy {
    let groups = &spec.container_groups;
    if groups.len() == 1 {
        return Strategy::CoarseGrained;
    }
    let count = |role| groups.iter().filter(|g| g.role == role).count();
    let (workflow, prov, dbms) = (count(GroupRole::Workflow), count(GroupRole::ProvService), count(GroupRole::Dbms));
    if workflow == 1 && prov == 1 {
        match (dbms, groups.len()) {
            (0, 2) => return Strategy::PartialModular,
            (1, 3) => return Strategy::ProvenanceModular,
            _ => {}
        }
    }
    let n = spec.activities.len();
    if n >= 2 && workflow == n {
        // every workflow group holds >= 1 activity, so n groups means one each
        return Strategy::FineGrained;
    }
    Strategy::HybridOther
}

/// Infers the strategy and cross-checks it against the declared one.
pub fn infer_strategy(spec: &WorkflowSpec) -> Result<Strategy, SpecError> {
    let inferred = classify_topology(spec);
    if inferred != spec.strategy {
        return Err(SpecError::StrategyMismatch { declared: spec.strategy, inferred });
    }
    Ok(inferred)
}

/// Resolves every group's image and its dependency closure. Returns the
/// union of closures with dependencies before dependents.
pub fn validate_against_catalog(spec: &WorkflowSpec, catalog: &Catalog) -> Result<Vec<ImageId>, SpecError> {
    let mut seen = BTreeSet::new();
    let mut union = Vec::new();
    for group in &spec.container_groups {
        let id = match catalog.resolve_ref(&group.image) {
            Ok(id) => id,
            Err(CatalogError::UnknownImage(r)) => return Err(SpecError::UnresolvedImage(r)),
            Err(e) => return Err(e.into()),
        };
        let closure = match catalog.resolve_image_closure(&id) {
            Err(CatalogError::UnresolvedDependency(r)) => return Err(SpecError::UnresolvedImage(r)),
            other => other?,
        };
        for member in closure {
            if seen.insert(member.clone()) {
                union.push(member);
            }
        }
    }
    Ok(union)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn group(name: &str, image: &str, role: GroupRole, acts: &[&str]) -> ContainerGroup {
        ContainerGroup {
            name: name.into(),
            image: image.into(),
            activities: acts.iter().map(|a| a.to_string()).collect(),
            role,
            readiness: None,
        }
    }

    pub(crate) fn denseed(strategy: Strategy) -> WorkflowSpec {
        let activities = ["preprocess", "train", "evaluate"]
            .iter()
            .enumerate()
            .map(|(i, n)| Activity {
                name: n.to_string(),
                script: format!("/workflow/{n}.py"),
                arguments: vec![],
                order_index: i as u32,
            })
            .collect();
        let all = ["preprocess", "train", "evaluate"];
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
            activities,
            container_groups,
            datasets: vec![],
            environment_label: "gpu-node".into(),
        }
    }

    #[test]
    fn denseed_topologies_classify_as_declared() {
        for s in Strategy::ALL {
            let spec = denseed(s);
            spec.validate().unwrap();
            assert_eq!(infer_strategy(&spec).unwrap(), s);
        }
    }

    #[test]
    fn parses_coarse_spec_without_prov_service() {
        let doc = r#"{
            "workflow_name": "DenseED",
            "strategy": "coarse_grained",
            "activities": [
                {"name": "prep", "script": "/w/prep.py", "order_index": 0},
                {"name": "train", "script": "/w/train.py", "arguments": ["--epochs", "5"], "order_index": 1}
            ],
            "container_groups": [
                {"name": "all", "image": "DenseED", "activities": ["prep", "train"], "role": "workflow"}
            ],
            "environment_label": "gpu-node"
        }"#;
        let spec = parse_spec(doc).unwrap();
        assert_eq!(spec.strategy, Strategy::CoarseGrained);
        assert_eq!(spec.prov_service, None);
        assert_eq!(spec.activities[1].argv(), ["/w/train.py", "--epochs", "5"]);
        assert_eq!(parse_spec(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn duplicate_order_index_is_a_schema_violation() {
        let mut spec = denseed(Strategy::CoarseGrained);
        spec.activities[1].order_index = 0;
        let err = parse_spec(&spec.to_json()).unwrap_err();
        assert!(
            matches!(err, SpecError::SchemaViolation { ref path, .. } if path == "activities[1].order_index"),
            "{err}"
        );
    }

    #[test]
    fn gaps_in_order_index_are_rejected() {
        let mut spec = denseed(Strategy::CoarseGrained);
        spec.activities[2].order_index = 7;
        assert!(matches!(spec.validate(), Err(SpecError::SchemaViolation { .. })));
    }

    #[test]
    fn unknown_strategy() {
        let doc = denseed(Strategy::CoarseGrained).to_json().replace("coarse_grained", "medium_grained");
        assert!(matches!(parse_spec(&doc), Err(SpecError::UnknownStrategy(s)) if s == "medium_grained"));
    }

    #[test]
    fn missing_field_names_its_path() {
        let doc = r#"{"workflow_name":"w","strategy":"coarse_grained","activities":[{"name":"a","order_index":0}],"container_groups":[]}"#;
        let err = parse_spec(doc).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("activities[0]") && msg.contains("script"), "{msg}");
    }

    #[test]
    fn zero_groups_rejected_at_parse() {
        let mut spec = denseed(Strategy::CoarseGrained);
        spec.container_groups.clear();
        assert!(matches!(parse_spec(&spec.to_json()), Err(SpecError::SchemaViolation { .. })));
    }

    #[test]
    fn unassigned_and_double_assigned_activities() {
        let mut spec = denseed(Strategy::ProvenanceModular);
        spec.container_groups[0].activities.pop();
        assert!(spec.validate().is_err());
        let mut spec = denseed(Strategy::FineGrained);
        spec.container_groups[1].activities.push("preprocess".into());
        assert!(spec.validate().is_err());
    }

    #[test]
    fn non_workflow_groups_hold_no_activities() {
        let mut spec = denseed(Strategy::PartialModular);
        spec.container_groups[0].activities.retain(|a| a != "evaluate");
        spec.container_groups[1].activities.push("evaluate".into());
        assert!(spec.validate().is_err());
    }

    #[test]
    fn declared_strategy_must_match() {
        let mut spec = denseed(Strategy::ProvenanceModular);
        spec.strategy = Strategy::PartialModular;
        assert!(matches!(
            infer_strategy(&spec),
            Err(SpecError::StrategyMismatch {
                declared: Strategy::PartialModular,
                inferred: Strategy::ProvenanceModular
            })
        ));
    }

    #[test]
    fn renaming_does_not_change_classification() {
        for s in Strategy::ALL {
            let mut spec = denseed(s);
            for g in &mut spec.container_groups {
                g.name = format!("renamed-{}", g.name);
            }
            for a in &mut spec.activities {
                let new = format!("x{}", a.name);
                for g in &mut spec.container_groups {
                    for ga in &mut g.activities {
                        if *ga == a.name {
                            *ga = new.clone();
                        }
                    }
                }
                a.name = new;
            }
            spec.validate().unwrap();
            assert_eq!(classify_topology(&spec), s);
        }
    }
}

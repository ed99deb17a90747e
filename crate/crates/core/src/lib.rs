//! Deploys containerized scientific workflows under a chosen
//! containerization strategy, brings up a provenance service stack before
//! the workflow, records container-level provenance for every run and
//! packages finished runs as verifiable research objects.
//!
//! The pieces, in the order a deployment touches them:
//!
//! - [`catalog`]: images, provenance services and recorded runs on disk.
//! - [`workflow`]: the workflow spec and strategy classification.
//! - [`planner`]: spec + catalog to an ordered [`planner::DeploymentPlan`].
//! - [`engine`]: container runtimes (simulated, or any CLI via templates).
//! - [`deployer`]: executes a plan and persists a [`record::RunRecord`].
//! - [`wrapper`]: research-object archives.
//! - [`analytics`]: ANOVA and post-hoc comparison of strategies.
//! - [`cli`]: the `provforge` command.

pub mod analytics;
pub mod catalog;
pub mod cli;
pub mod deployer;
pub mod engine;
pub mod planner;
pub mod record;
pub mod workflow;
pub mod wrapper;

pub use catalog::{Catalog, ImageId, ImageRecord, ProvenanceServiceRecord};
pub use deployer::{deploy, DeployOptions, DeployReport};
pub use engine::{ContainerEngine, EngineConfig, SimScenario, SimulatedEngine};
pub use planner::{build_plan, DeploymentPlan};
pub use record::{Outcome, RunRecord};
pub use workflow::{parse_spec, Strategy, WorkflowSpec};

//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation error (bad input, unknown run or
//! image), 2 runtime failure (failed or aborted run, engine trouble, a
//! research object that does not verify), 3 I/O. Errors go to stderr as a
//! single line `error: <kind>: <message>`; data goes to stdout.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

use crate::analytics::{summarize_runs, AnalysisReport, AnalyticsError, GroupSummary};
use crate::catalog::{Catalog, CatalogError, ImageRecord, ProvenanceServiceRecord, RunFilter, CATALOG_ENV};
use crate::deployer::{self, DeployError, DeployOptions};
use crate::engine::{EngineConfig, EngineError, ENGINE_ENV};
use crate::planner::{build_plan_with, validate_plan, PlanError, PlanOptions, DEFAULT_PORT_BASE};
use crate::record::{Attachment, Outcome, RunRecord};
use crate::workflow::{parse_spec, SpecError, Strategy};
use crate::wrapper::{build_research_object, verify_research_object, WrapError};

#[derive(Debug, Parser)]
#[command(name = "provforge", version, about = "Deploy containerized workflows with a provenance stack")]
pub struct Cli {
    /// Catalog directory.
    #[arg(long, global = true, env = CATALOG_ENV)]
    pub catalog: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Manage images and provenance services.
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Plan and execute a workflow spec.
    Deploy(DeployArgs),
    /// Inspect recorded runs.
    #[command(subcommand)]
    Runs(RunsCmd),
    /// Compare execution times across strategies.
    Analyze(AnalyzeArgs),
    /// Build or verify research objects.
    #[command(subcommand, name = "research-object")]
    ResearchObject(RoCmd),
}

#[derive(Debug, Subcommand)]
pub enum CatalogCmd {
    /// Register an image descriptor.
    AddImage {
        file: PathBuf,
        /// Store as a new definition version when the digest changed.
        #[arg(long)]
        bump: bool,
    },
    /// Register a provenance service descriptor.
    AddProvService { file: PathBuf },
    /// Make a registered service the default.
    SetDefault { service: String },
    /// List images and services.
    List,
    /// Dependency-ordered closure of an image.
    Closure { image: String },
}

#[derive(Debug, Args)]
pub struct DeployArgs {
    pub spec: PathBuf,
    /// Engine configuration file.
    #[arg(long, env = ENGINE_ENV)]
    pub engine: Option<PathBuf>,
    /// Print the plan without touching the engine.
    #[arg(long)]
    pub dry_run: bool,
    /// Skip the research object.
    #[arg(long)]
    pub no_wrap: bool,
    #[arg(long, default_value_t = DEFAULT_PORT_BASE)]
    pub port_base: u16,
    /// Research object path.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// External file to reference from the record, as `label=path`.
    #[arg(long = "attach", value_name = "LABEL=PATH")]
    pub attachments: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum RunsCmd {
    List {
        #[arg(long)]
        workflow: Option<String>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        outcome: Option<String>,
    },
    Show {
        run_id: String,
    },
    Status {
        run_id: String,
    },
    Abort {
        run_id: String,
        /// Seconds to wait for the orchestrator to stop.
        #[arg(long, default_value_t = 60)]
        wait: u64,
    },
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub workflow: String,
    #[arg(long)]
    pub env: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Use published summaries (`{label, mean, std, n}` per group) instead of runs.
    #[arg(long)]
    pub summaries: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RoCmd {
    Build {
        run_id: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    Verify {
        archive: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
            CliError::Io(_) => "io",
        }
    }
}

impl From<CatalogError> for CliError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Catalog(c) => c.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Catalog(c) => c.into(),
            PlanError::Spec(s) => s.into(),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Io { .. } => CliError::Io(e.to_string()),
            EngineError::Config(_) | EngineError::Template(_) => CliError::Validation(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<DeployError> for CliError {
    fn from(e: DeployError) -> Self {
        match e {
            DeployError::Plan(p) => p.into(),
            DeployError::Catalog(c) => c.into(),
            DeployError::UnknownRun(_) | DeployError::AlreadyTerminal(_) | DeployError::StaleImage { .. } => {
                CliError::Validation(e.to_string())
            }
            DeployError::Io { .. } => CliError::Io(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<WrapError> for CliError {
    fn from(e: WrapError) -> Self {
        match e {
            WrapError::Io { .. } => CliError::Io(e.to_string()),
            WrapError::Catalog(c) => c.into(),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Parses a JSON document, naming the offending path on failure.
fn parse_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        CliError::Validation(format!("{}: at `{at}`: {}", path.display(), e.into_inner()))
    })
}

fn base_dir(file: &Path) -> Result<PathBuf> {
    let abs = std::path::absolute(file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
    Ok(abs.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn anchor(base: &Path, path: &str) -> String {
    if Path::new(path).is_absolute() {
        path.to_string()
    } else {
        base.join(path).to_string_lossy().into_owned()
    }
}

fn open_catalog(cli: &Cli) -> Result<Catalog> {
    let root = cli
        .catalog
        .clone()
        .ok_or_else(|| CliError::Usage(format!("no catalog: pass --catalog or set {CATALOG_ENV}")))?;
    Ok(Catalog::open(root)?)
}

/// A closed stdout (e.g. piped into `head`) is not an error.
fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    match out.write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(e.to_string())),
        _ => Ok(()),
    }
}

fn json_line(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    emit(out, &format!("{text}\n"))
}

fn line(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<()> {
    emit(out, &format!("{text}\n"))
}

fn catalog_cmd(cli: &Cli, cmd: &CatalogCmd, out: &mut dyn Write) -> Result<()> {
    let cat = open_catalog(cli)?;
    match cmd {
        CatalogCmd::AddImage { file, bump } => {
            let mut record: ImageRecord = parse_json(file)?;
            // Relative paths in a descriptor are relative to the descriptor.
            let base = base_dir(file)?;
            if let Some(def) = &record.definition_ref {
                record.definition_ref = Some(anchor(&base, def));
            }
            for v in &mut record.volumes {
                v.host_path = anchor(&base, &v.host_path);
            }
            let id = cat.register_image_with(record, *bump)?;
            if cli.json {
                json_line(out, &serde_json::json!({ "image": id }))
            } else {
                line(out, id)
            }
        }
        CatalogCmd::AddProvService { file } => {
            let svc: ProvenanceServiceRecord = parse_json(file)?;
            let name = cat.register_prov_service(svc)?;
            if cli.json {
                json_line(out, &serde_json::json!({ "service": name }))
            } else {
                line(out, name)
            }
        }
        CatalogCmd::SetDefault { service } => {
            cat.set_default_prov_service(service)?;
            line(out, service)
        }
        CatalogCmd::List => {
            let images = cat.images()?;
            let services = cat.prov_services()?;
            if cli.json {
                let images: Vec<_> = images
                    .iter()
                    .map(|i| serde_json::json!({"image": i.id, "digest": i.record.digest, "version": i.record.definition_version, "depends_on": i.resolved_deps}))
                    .collect();
                return json_line(out, &serde_json::json!({ "images": images, "prov_services": services }));
            }
            for i in &images {
                line(out, format!("image    {}  v{}  {}", i.id, i.record.definition_version, i.record.digest))?;
            }
            for s in &services {
                let default = if s.is_default { "  (default)" } else { "" };
                line(out, format!("service  {}  {}{default}", s.service_name, s.image))?;
            }
            Ok(())
        }
        CatalogCmd::Closure { image } => {
            let id = cat.resolve_ref(image)?;
            let closure = cat.resolve_image_closure(&id)?;
            if cli.json {
                return json_line(out, &closure);
            }
            for id in closure {
                line(out, id)?;
            }
            Ok(())
        }
    }
}

fn parse_attachment(raw: &str) -> Result<Attachment> {
    let (label, path) =
        raw.split_once('=').ok_or_else(|| CliError::Usage(format!("--attach expects LABEL=PATH, got `{raw}`")))?;
    if !crate::catalog::is_identifier(label) {
        return Err(CliError::Usage(format!("attachment label `{label}` must be an identifier")));
    }
    let abs = std::path::absolute(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    Ok(Attachment { label: label.to_string(), path: abs.to_string_lossy().into_owned() })
}

fn deploy_cmd(cli: &Cli, args: &DeployArgs, out: &mut dyn Write) -> Result<()> {
    let cat = open_catalog(cli)?;
    let mut spec = parse_spec(&read_text(&args.spec)?)?;
    let base = base_dir(&args.spec)?;
    for d in &mut spec.datasets {
        d.host_path = anchor(&base, &d.host_path);
    }
    let plan = build_plan_with(&spec, &cat, PlanOptions { port_base: args.port_base })?;
    if args.dry_run {
        validate_plan(&plan)?;
        return line(out, plan.to_json());
    }
    let engine_path =
        args.engine.as_ref().ok_or_else(|| CliError::Usage(format!("no engine: pass --engine or set {ENGINE_ENV}")))?;
    let mut engine = EngineConfig::load(engine_path)?.build()?;
    let attachments = args.attachments.iter().map(|a| parse_attachment(a)).collect::<Result<Vec<_>>>()?;
    let options = DeployOptions {
        no_wrap: args.no_wrap,
        research_object: args.output.clone(),
        attachments,
        ..Default::default()
    };
    match deployer::deploy(&spec, &plan, engine.as_mut(), &cat, options) {
        Ok(report) => {
            if cli.json {
                json_line(
                    out,
                    &serde_json::json!({
                        "run_id": report.record.run_id,
                        "outcome": report.record.outcome,
                        "duration_ms": report.record.duration_ms,
                        "research_object": report.research_object,
                    }),
                )
            } else {
                line(out, &report.record.run_id)?;
                if let Some(ro) = report.research_object {
                    line(out, ro.display())?;
                }
                Ok(())
            }
        }
        Err(e) => {
            // The run id of a failed run is still data.
            if let Some(rec) = e.record() {
                if cli.json {
                    json_line(
                        out,
                        &serde_json::json!({"run_id": rec.run_id, "outcome": rec.outcome, "failure_phase": rec.failure_phase}),
                    )?;
                } else {
                    line(out, &rec.run_id)?;
                }
            }
            Err(e.into())
        }
    }
}

fn runs_cmd(cli: &Cli, cmd: &RunsCmd, out: &mut dyn Write) -> Result<()> {
    let cat = open_catalog(cli)?;
    match cmd {
        RunsCmd::List { workflow, strategy, env, outcome } => {
            let filter = RunFilter {
                workflow: workflow.clone(),
                strategy: strategy.as_deref().map(str::parse::<Strategy>).transpose()?,
                environment: env.clone(),
                outcome: outcome
                    .as_deref()
                    .map(|o| {
                        serde_json::from_value::<Outcome>(serde_json::Value::String(o.into()))
                            .map_err(|_| CliError::Usage(format!("unknown outcome `{o}`")))
                    })
                    .transpose()?,
            };
            let runs = cat.query_runs(&filter)?;
            if cli.json {
                let rows: Vec<_> = runs.iter().map(run_row).collect();
                return json_line(out, &rows);
            }
            for r in &runs {
                line(
                    out,
                    format!(
                        "{}  {}  {}  {}  {}  {:.3} min",
                        r.run_id,
                        r.workflow_name,
                        r.strategy,
                        r.environment_label,
                        outcome_name(r.outcome),
                        r.duration_minutes()
                    ),
                )?;
            }
            Ok(())
        }
        RunsCmd::Show { run_id } => {
            let rec = cat.run(run_id)?.ok_or_else(|| CliError::Validation(format!("unknown run `{run_id}`")))?;
            json_line(out, &rec)
        }
        RunsCmd::Status { run_id } => {
            let st = deployer::status(&cat, run_id)?;
            if cli.json {
                return json_line(out, &st);
            }
            let phase = st.current_phase.clone().unwrap_or_else(|| "-".into());
            let outcome = st.outcome.map(outcome_name).unwrap_or("running");
            line(
                out,
                format!(
                    "{}  {}  phase {}/{} {}  elapsed {} ms",
                    st.run_id, outcome, st.phase_index, st.phase_count, phase, st.elapsed_ms
                ),
            )?;
            for (c, s) in &st.containers {
                line(out, format!("  {c}: {s}"))?;
            }
            Ok(())
        }
        RunsCmd::Abort { run_id, wait } => {
            let rec = deployer::abort_run(&cat, run_id, Duration::from_secs(*wait))?;
            line(out, format!("{} {}", rec.run_id, outcome_name(rec.outcome)))
        }
    }
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Succeeded => "succeeded",
        Outcome::Failed => "failed",
        Outcome::Aborted => "aborted",
    }
}

fn run_row(r: &RunRecord) -> serde_json::Value {
    serde_json::json!({
        "run_id": r.run_id,
        "workflow": r.workflow_name,
        "strategy": r.strategy,
        "environment": r.environment_label,
        "outcome": r.outcome,
        "duration_ms": r.duration_ms,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryFile {
    #[serde(default)]
    workflow: Option<String>,
    #[serde(default)]
    environment: Option<String>,
    groups: Vec<GroupSummary>,
}

fn analyze_cmd(cli: &Cli, args: &AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let groups = match &args.summaries {
        Some(path) => {
            let file: SummaryFile = parse_json(path)?;
            for (field, given, want) in
                [("workflow", &file.workflow, &args.workflow), ("environment", &file.environment, &args.env)]
            {
                if given.as_ref().is_some_and(|g| g != want) {
                    return Err(CliError::Validation(format!(
                        "{}: {field} is `{}`, not `{want}`",
                        path.display(),
                        given.as_deref().unwrap_or_default()
                    )));
                }
            }
            file.groups
        }
        None => {
            let cat = open_catalog(cli)?;
            let filter = RunFilter {
                workflow: Some(args.workflow.clone()),
                environment: Some(args.env.clone()),
                outcome: Some(Outcome::Succeeded),
                ..Default::default()
            };
            let runs = cat.query_runs(&filter)?;
            if runs.is_empty() {
                return Err(CliError::Validation(format!(
                    "no succeeded runs of `{}` on `{}`",
                    args.workflow, args.env
                )));
            }
            summarize_runs(&runs)?.iter().map(|s| s.summary()).collect()
        }
    };
    let report = AnalysisReport::from_summaries(&args.workflow, &args.env, groups, args.alpha)?;
    if cli.json {
        json_line(out, &report)
    } else {
        emit(out, &report.to_text())
    }
}

fn ro_cmd(cli: &Cli, cmd: &RoCmd, out: &mut dyn Write) -> Result<()> {
    match cmd {
        RoCmd::Build { run_id, output } => {
            let cat = open_catalog(cli)?;
            let rec = cat.run(run_id)?.ok_or_else(|| CliError::Validation(format!("unknown run `{run_id}`")))?;
            let path = output.clone().unwrap_or_else(|| cat.run_dir(run_id).join(deployer::RESEARCH_OBJECT_FILE));
            let manifest = build_research_object(&rec, &cat, &path)?;
            if cli.json {
                json_line(out, &serde_json::json!({"path": path, "entries": manifest.inventory.len() + 2}))
            } else {
                line(out, path.display())
            }
        }
        RoCmd::Verify { archive } => {
            let report = verify_research_object(archive)?;
            if cli.json {
                json_line(out, &report)?;
            } else if report.ok() {
                line(out, format!("ok  {}  {} entries", report.run_id, report.entries))?;
            } else {
                for v in &report.violations {
                    line(out, v)?;
                }
            }
            if report.ok() {
                Ok(())
            } else {
                Err(CliError::Runtime(format!("{} violation(s) in {}", report.violations.len(), archive.display())))
            }
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Catalog(c) => catalog_cmd(cli, c, out),
        Command::Deploy(d) => deploy_cmd(cli, d, out),
        Command::Runs(r) => runs_cmd(cli, r, out),
        Command::Analyze(a) => analyze_cmd(cli, a, out),
        Command::ResearchObject(r) => ro_cmd(cli, r, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: {}: {msg}", e.kind());
            e.exit_code()
        }
    }
}

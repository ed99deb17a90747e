//! File-backed catalog of container images, provenance services, and the
//! container provenance of past runs.
//!
//! On-disk layout (one directory per catalog, safe on shared filesystems):
//!
//! ```text
//! <root>/
//!   .lock                         single-writer lock
//!   images/<name>/<tag>/v<N>.json one document per image definition version
//!   services/<service>.json       one document per provenance service
//!   default-service               name of the default provenance service
//!   runs.jsonl                    append-only run log
//!   runs/<run_id>/                run directories (see `deployer`)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::record::{Outcome, RunRecord};
use crate::workflow::Strategy;

pub const CATALOG_ENV: &str = "PROVFORGE_CATALOG";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("unresolved dependency `{0}`")]
    UnresolvedDependency(String),
    #[error("image `{id}` already registered with digest {existing}; re-register with a version bump to replace it with {new}")]
    ConflictingDigest { id: ImageId, existing: String, new: String },
    #[error("provenance service `{0}` is already registered")]
    DuplicateServiceName(String),
    #[error("unknown provenance service `{0}`")]
    UnknownService(String),
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("image reference `{reference}` is ambiguous: {candidates:?}")]
    AmbiguousImage { reference: String, candidates: Vec<String> },
    #[error("dependency cycle through {0:?}")]
    DependencyCycle(Vec<String>),
    #[error("run `{0}` is already recorded")]
    RunExists(String),
    #[error("corrupt catalog document {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

pub type Result<T, E = CatalogError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CatalogError + '_ {
    move |source| CatalogError::Io { path: path.to_path_buf(), source }
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> CatalogError {
    CatalogError::InvalidField { field: field.into(), reason: reason.into() }
}

/// Names usable as path components: `[A-Za-z0-9._-]+`, not starting with `.`.
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty() && !s.starts_with('.') && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

fn check_identifier(field: &str, value: &str) -> Result<()> {
    if is_identifier(value) {
        Ok(())
    } else {
        Err(invalid(field, format!("`{value}` is not an identifier ([A-Za-z0-9._-], no leading dot)")))
    }
}

/// Stable catalog identifier of an image: `name:tag`.
///
/// Ordering is by name, then tag, which is the tie-break used for
/// dependency ordering.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImageId {
    pub name: String,
    pub tag: String,
}

impl ImageId {
    pub fn new(name: impl Into<String>, tag: impl Into<String>) -> Self {
        Self { name: name.into(), tag: tag.into() }
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name, self.tag)
    }
}

impl FromStr for ImageId {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, tag) =
            s.split_once(':').ok_or_else(|| invalid("image", format!("`{s}` is not of the form name:tag")))?;
        check_identifier("image.name", name)?;
        check_identifier("image.tag", tag)?;
        Ok(Self::new(name, tag))
    }
}

impl Serialize for ImageId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ImageId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMode {
    ReadOnly,
    ReadWrite,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeSpec {
    pub host_path: String,
    pub container_path: String,
    pub mode: VolumeMode,
}

impl VolumeSpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        if self.host_path.is_empty() {
            return Err(invalid(format!("{field}.host_path"), "must not be empty"));
        }
        if !self.container_path.starts_with('/') {
            return Err(invalid(format!("{field}.container_path"), "must be an absolute path"));
        }
        Ok(())
    }
}

/// A published port. `host_port == 0` asks the planner to assign one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortSpec {
    pub container_port: u16,
    #[serde(default)]
    pub host_port: u16,
}

impl PortSpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        if self.container_port == 0 {
            return Err(invalid(format!("{field}.container_port"), "must be in 1..=65535"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    TcpPort,
    Command,
    FileExists,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbeTarget {
    Port(u16),
    Command(Vec<String>),
    Path(String),
}

/// Check that a started container's service accepts work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadinessProbe {
    pub kind: ProbeKind,
    pub target: ProbeTarget,
    /// Seconds.
    pub timeout: f64,
    /// Seconds between polls.
    pub interval: f64,
}

impl ReadinessProbe {
    pub fn tcp(port: u16, timeout: f64, interval: f64) -> Self {
        Self { kind: ProbeKind::TcpPort, target: ProbeTarget::Port(port), timeout, interval }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.interval > 0.0 && self.interval.is_finite()) {
            return Err(invalid(format!("{field}.interval"), "must be > 0"));
        }
        if !(self.timeout >= self.interval && self.timeout.is_finite()) {
            return Err(invalid(format!("{field}.timeout"), "must be >= interval"));
        }
        match (&self.kind, &self.target) {
            (ProbeKind::TcpPort, ProbeTarget::Port(p)) if *p > 0 => Ok(()),
            (ProbeKind::Command, ProbeTarget::Command(argv)) if !argv.is_empty() => Ok(()),
            (ProbeKind::FileExists, ProbeTarget::Path(p)) if p.starts_with('/') => Ok(()),
            (kind, _) => Err(invalid(
                format!("{field}.target"),
                format!("does not fit probe kind {kind:?} (port 1..=65535, non-empty argv, or absolute path)"),
            )),
        }
    }

    pub fn timeout_ms(&self) -> u64 {
        (self.timeout * 1000.0).round() as u64
    }

    pub fn interval_ms(&self) -> u64 {
        ((self.interval * 1000.0).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftwarePackage {
    pub name: String,
    pub version: String,
}

fn default_version() -> u32 {
    1
}

/// Catalog entry describing one container image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub name: String,
    pub tag: String,
    pub registry: String,
    /// Algorithm-prefixed lowercase hex, e.g. `sha256:…`.
    pub digest: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition_ref: Option<String>,
    #[serde(default = "default_version")]
    pub definition_version: u32,
    #[serde(default)]
    pub volumes: Vec<VolumeSpec>,
    #[serde(default)]
    pub ports: Vec<PortSpec>,
    #[serde(default)]
    pub start_command: Vec<String>,
    #[serde(default)]
    pub software_stack: Vec<SoftwarePackage>,
    #[serde(default)]
    pub depends_on: Vec<String>,
}

impl ImageRecord {
    pub fn id(&self) -> ImageId {
        ImageId::new(&self.name, &self.tag)
    }

    /// `<registry>/<name>:<tag>`, the reference handed to container engines.
    pub fn reference(&self) -> String {
        format!("{}/{}:{}", self.registry.trim_end_matches('/'), self.name, self.tag)
    }

    pub fn validate(&self) -> Result<()> {
        check_identifier("name", &self.name)?;
        check_identifier("tag", &self.tag)?;
        if self.registry.trim().is_empty() {
            return Err(invalid("registry", "must not be empty"));
        }
        validate_digest(&self.digest)?;
        if self.definition_version < 1 {
            return Err(invalid("definition_version", "must be >= 1"));
        }
        for (i, v) in self.volumes.iter().enumerate() {
            v.validate(&format!("volumes[{i}]"))?;
        }
        for (i, p) in self.ports.iter().enumerate() {
            p.validate(&format!("ports[{i}]"))?;
        }
        for (i, dep) in self.depends_on.iter().enumerate() {
            if dep.is_empty() {
                return Err(invalid(format!("depends_on[{i}]"), "must not be empty"));
            }
        }
        Ok(())
    }
}

/// Digest format: `<algorithm>:<lowercase hex>`; sha256/sha512 lengths are checked.
pub fn validate_digest(digest: &str) -> Result<()> {
    let (alg, hex) =
        digest.split_once(':').ok_or_else(|| invalid("digest", "must be algorithm-prefixed, e.g. sha256:<hex>"))?;
    if alg.is_empty() || !alg.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()) {
        return Err(invalid("digest", format!("bad algorithm `{alg}`")));
    }
    if hex.is_empty() || !hex.chars().all(|c| matches!(c, '0'..='9' | 'a'..='f')) {
        return Err(invalid("digest", "must be lowercase hex after the algorithm prefix"));
    }
    let expected = match alg {
        "sha256" => Some(64),
        "sha512" => Some(128),
        _ => None,
    };
    if let Some(len) = expected {
        if hex.len() != len {
            return Err(invalid("digest", format!("{alg} digest must have {len} hex digits")));
        }
    }
    Ok(())
}

/// `sha256:<hex>` of a byte string; the algorithm used everywhere content is hashed.
pub fn sha256_digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvenanceServiceRecord {
    /// Image reference, `name:tag` or a bare name that is unique in the catalog.
    pub image: String,
    pub service_name: String,
    #[serde(default)]
    pub requires_instrumentation: bool,
    pub readiness: ReadinessProbe,
    #[serde(default)]
    pub is_default: bool,
}

impl ProvenanceServiceRecord {
    pub fn validate(&self) -> Result<()> {
        check_identifier("service_name", &self.service_name)?;
        if self.image.is_empty() {
            return Err(invalid("image", "must not be empty"));
        }
        self.readiness.validate("readiness")
    }
}

/// An image document as persisted: the descriptor plus what registration resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredImage {
    pub id: ImageId,
    pub record: ImageRecord,
    pub resolved_deps: Vec<ImageId>,
    /// Content hash of the definition file, when `definition_ref` was readable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition_hash: Option<String>,
    pub registered_at: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFilter {
    pub workflow: Option<String>,
    pub strategy: Option<Strategy>,
    pub environment: Option<String>,
    pub outcome: Option<Outcome>,
}

impl RunFilter {
    pub fn matches(&self, run: &RunRecord) -> bool {
        self.workflow.as_ref().is_none_or(|w| *w == run.workflow_name)
            && self.strategy.is_none_or(|s| s == run.strategy)
            && self.environment.as_ref().is_none_or(|e| *e == run.environment_label)
            && self.outcome.is_none_or(|o| o == run.outcome)
    }
}

/// Orders the dependency closure of `root` so that dependencies precede
/// dependents. Ties are broken by the key order (`ImageId` sorts by name).
/// `root` is always last because every other member is one of its
/// transitive dependencies.
pub fn closure_order<K: Ord + Clone + fmt::Display>(graph: &BTreeMap<K, Vec<K>>, root: &K) -> Result<Vec<K>> {
    let mut members = BTreeSet::new();
    let mut stack = vec![root.clone()];
    while let Some(node) = stack.pop() {
        if !members.insert(node.clone()) {
            continue;
        }
        let deps = graph.get(&node).ok_or_else(|| CatalogError::UnresolvedDependency(node.to_string()))?;
        stack.extend(deps.iter().cloned());
    }

    // Kahn's algorithm restricted to the closure; `ready` pops the smallest key.
    let mut pending: BTreeMap<K, usize> =
        members.iter().map(|m| (m.clone(), graph[m].iter().collect::<BTreeSet<_>>().len())).collect();
    let mut dependents: BTreeMap<&K, Vec<&K>> = BTreeMap::new();
    for m in &members {
        for d in graph[m].iter().collect::<BTreeSet<_>>() {
            dependents.entry(d).or_default().push(m);
        }
    }
    let mut ready: BTreeSet<K> = pending.iter().filter(|(_, n)| **n == 0).map(|(k, _)| k.clone()).collect();
    let mut order = Vec::with_capacity(members.len());
    while let Some(next) = ready.pop_first() {
        for dependent in dependents.get(&next).into_iter().flatten() {
            let n = pending.get_mut(*dependent).expect("closure member");
            *n -= 1;
            if *n == 0 {
                ready.insert((*dependent).clone());
            }
        }
        order.push(next);
    }
    if order.len() != members.len() {
        let done: BTreeSet<_> = order.iter().collect();
        let stuck = members.iter().filter(|m| !done.contains(m)).map(|m| m.to_string()).collect();
        return Err(CatalogError::DependencyCycle(stuck));
    }
    Ok(order)
}

/// Handle on a catalog directory. Cheap to clone; readers take no lock,
/// writers serialize on an exclusive file lock.
#[derive(Debug, Clone)]
pub struct Catalog {
    root: PathBuf,
}

impl Catalog {
    /// Opens (creating if needed) the catalog rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for dir in [root.join("images"), root.join("services"), root.join("runs")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(run_id)
    }

    fn write_lock(&self) -> Result<File> {
        let path = self.root.join(".lock");
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(&path).map_err(io_err(&path))?;
        file.lock().map_err(io_err(&path))?;
        Ok(file)
    }

    // ---- images ----------------------------------------------------------

    fn image_dir(&self, id: &ImageId) -> PathBuf {
        self.root.join("images").join(&id.name).join(&id.tag)
    }

    /// All stored versions of one image, oldest first.
    pub fn image_versions(&self, id: &ImageId) -> Result<Vec<StoredImage>> {
        let dir = self.image_dir(id);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut versions = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                versions.push(read_json::<StoredImage>(&path)?);
            }
        }
        versions.sort_by_key(|v| v.record.definition_version);
        Ok(versions)
    }

    /// Current (highest definition version) document of an image.
    pub fn image(&self, id: &ImageId) -> Result<Option<StoredImage>> {
        Ok(self.image_versions(id)?.pop())
    }

    /// Every image, current versions only, sorted by id.
    pub fn images(&self) -> Result<Vec<StoredImage>> {
        let mut out = Vec::new();
        let images = self.root.join("images");
        for name in sorted_dir(&images)? {
            for tag in sorted_dir(&name)? {
                let (Some(n), Some(t)) = (file_name(&name), file_name(&tag)) else { continue };
                if let Some(img) = self.image(&ImageId::new(n, t))? {
                    out.push(img);
                }
            }
        }
        Ok(out)
    }

    /// Resolves `name:tag`, or a bare `name` registered under exactly one tag.
    pub fn resolve_ref(&self, reference: &str) -> Result<ImageId> {
        if reference.contains(':') {
            let id: ImageId = reference.parse()?;
            return match self.image(&id)? {
                Some(_) => Ok(id),
                None => Err(CatalogError::UnknownImage(reference.to_string())),
            };
        }
        if !is_identifier(reference) {
            return Err(CatalogError::UnknownImage(reference.to_string()));
        }
        let dir = self.root.join("images").join(reference);
        let tags = if dir.exists() { sorted_dir(&dir)? } else { Vec::new() };
        match tags.as_slice() {
            [] => Err(CatalogError::UnknownImage(reference.to_string())),
            [tag] => Ok(ImageId::new(reference, file_name(tag).unwrap_or_default())),
            many => Err(CatalogError::AmbiguousImage {
                reference: reference.to_string(),
                candidates: many.iter().filter_map(|t| file_name(t)).map(|t| format!("{reference}:{t}")).collect(),
            }),
        }
    }

    pub fn register_image(&self, record: ImageRecord) -> Result<ImageId> {
        self.register_image_with(record, false)
    }

    /// Registers an image. Identical (name, tag, digest) is idempotent; a new
    /// digest for an existing name+tag requires `bump`, which stores the
    /// record as definition version current+1.
    pub fn register_image_with(&self, mut record: ImageRecord, bump: bool) -> Result<ImageId> {
        record.validate()?;
        let id = record.id();
        let _lock = self.write_lock()?;

        let mut resolved = Vec::with_capacity(record.depends_on.len());
        for dep in &record.depends_on {
            match self.resolve_ref(dep) {
                Ok(dep_id) => resolved.push(dep_id),
                Err(CatalogError::UnknownImage(_)) => return Err(CatalogError::UnresolvedDependency(dep.clone())),
                Err(e) => return Err(e),
            }
        }

        let versions = self.image_versions(&id)?;
        if let Some(current) = versions.last() {
            if current.record.digest == record.digest {
                return Ok(id);
            }
            if !bump || versions.iter().any(|v| v.record.digest == record.digest) {
                return Err(CatalogError::ConflictingDigest {
                    id,
                    existing: current.record.digest.clone(),
                    new: record.digest,
                });
            }
            record.definition_version = current.record.definition_version + 1;
        }

        let definition_hash =
            record.definition_ref.as_deref().and_then(|r| fs::read(r).ok()).map(|bytes| sha256_digest(&bytes));
        let stored = StoredImage {
            id: id.clone(),
            resolved_deps: resolved,
            definition_hash,
            registered_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            record,
        };
        let dir = self.image_dir(&id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_json_atomic(&dir.join(format!("v{}.json", stored.record.definition_version)), &stored)?;
        Ok(id)
    }

    /// Dependency graph over current image versions.
    pub fn dependency_graph(&self) -> Result<BTreeMap<ImageId, Vec<ImageId>>> {
        Ok(self.images()?.into_iter().map(|img| (img.id, img.resolved_deps)).collect())
    }

    /// Topological order of the dependency closure of `image`, dependencies
    /// first, `image` last, ties broken by name.
    pub fn resolve_image_closure(&self, image: &ImageId) -> Result<Vec<ImageId>> {
        let graph = self.dependency_graph()?;
        if !graph.contains_key(image) {
            return Err(CatalogError::UnknownImage(image.to_string()));
        }
        closure_order(&graph, image)
    }

    // ---- provenance services ---------------------------------------------

    fn service_path(&self, name: &str) -> PathBuf {
        self.root.join("services").join(format!("{name}.json"))
    }

    fn default_service_name(&self) -> Result<Option<String>> {
        let path = self.root.join("default-service");
        match fs::read_to_string(&path) {
            Ok(s) => Ok(Some(s.trim().to_string()).filter(|s| !s.is_empty())),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn write_default(&self, name: &str) -> Result<()> {
        write_bytes_atomic(&self.root.join("default-service"), format!("{name}\n").as_bytes())
    }

    /// Registers a provenance service. The first service registered becomes
    /// the default, as does any service registered with `is_default: true`.
    pub fn register_prov_service(&self, mut descriptor: ProvenanceServiceRecord) -> Result<String> {
        descriptor.validate()?;
        let _lock = self.write_lock()?;
        let image = match self.resolve_ref(&descriptor.image) {
            Ok(id) => id,
            Err(CatalogError::UnknownImage(r)) => return Err(CatalogError::UnresolvedDependency(r)),
            Err(e) => return Err(e),
        };
        self.resolve_image_closure(&image)?;

        let path = self.service_path(&descriptor.service_name);
        if path.exists() {
            return Err(CatalogError::DuplicateServiceName(descriptor.service_name));
        }
        let current_default = self.default_service_name()?;
        let make_default = descriptor.is_default || current_default.is_none();
        descriptor.is_default = false;
        write_json_atomic(&path, &descriptor)?;
        if make_default {
            self.write_default(&descriptor.service_name)?;
        }
        Ok(descriptor.service_name)
    }

    pub fn set_default_prov_service(&self, service_name: &str) -> Result<()> {
        let _lock = self.write_lock()?;
        if !is_identifier(service_name) || !self.service_path(service_name).exists() {
            return Err(CatalogError::UnknownService(service_name.to_string()));
        }
        self.write_default(service_name)
    }

    pub fn prov_service(&self, name: &str) -> Result<Option<ProvenanceServiceRecord>> {
        if !is_identifier(name) {
            return Ok(None);
        }
        let path = self.service_path(name);
        if !path.exists() {
            return Ok(None);
        }
        let mut svc: ProvenanceServiceRecord = read_json(&path)?;
        svc.is_default = self.default_service_name()?.as_deref() == Some(name);
        Ok(Some(svc))
    }

    /// All services sorted by name, `is_default` reflecting the catalog default.
    pub fn prov_services(&self) -> Result<Vec<ProvenanceServiceRecord>> {
        let default = self.default_service_name()?;
        let dir = self.root.join("services");
        let mut out = Vec::new();
        for path in sorted_dir(&dir)? {
            if path.extension().is_some_and(|e| e == "json") {
                let mut svc: ProvenanceServiceRecord = read_json(&path)?;
                svc.is_default = default.as_deref() == Some(svc.service_name.as_str());
                out.push(svc);
            }
        }
        Ok(out)
    }

    pub fn default_prov_service(&self) -> Result<Option<ProvenanceServiceRecord>> {
        match self.default_service_name()? {
            Some(name) => self.prov_service(&name),
            None => Ok(None),
        }
    }

    // ---- runs --------------------------------------------------------------

    fn run_log(&self) -> PathBuf {
        self.root.join("runs.jsonl")
    }

    /// Appends a terminal run to the run log and writes `runs/<id>/record.json`.
    pub fn record_run(&self, run: &RunRecord) -> Result<String> {
        let _lock = self.write_lock()?;
        let dir = self.run_dir(&run.run_id);
        let record_path = dir.join("record.json");
        if record_path.exists() {
            return Err(CatalogError::RunExists(run.run_id.clone()));
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_json_atomic(&record_path, run)?;

        let log = self.run_log();
        let mut line = serde_json::to_vec(run).expect("run record serializes");
        line.push(b'\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&log).map_err(io_err(&log))?;
        file.write_all(&line).map_err(io_err(&log))?;
        file.sync_data().map_err(io_err(&log))?;
        Ok(run.run_id.clone())
    }

    /// Matching runs in start-time order.
    pub fn query_runs(&self, filter: &RunFilter) -> Result<Vec<RunRecord>> {
        let log = self.run_log();
        let file = match File::open(&log) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&log)(e)),
        };
        let mut runs = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(&log))?;
            if line.trim().is_empty() {
                continue;
            }
            let run: RunRecord = serde_json::from_str(&line)
                .map_err(|e| CatalogError::Corrupt { path: log.clone(), reason: format!("line {}: {e}", i + 1) })?;
            if filter.matches(&run) {
                runs.push(run);
            }
        }
        runs.sort_by(|a, b| a.started_at.cmp(&b.started_at).then_with(|| a.run_id.cmp(&b.run_id)));
        Ok(runs)
    }

    pub fn run(&self, run_id: &str) -> Result<Option<RunRecord>> {
        if !is_identifier(run_id) {
            return Ok(None);
        }
        let path = self.run_dir(run_id).join("record.json");
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }
}

fn file_name(path: &Path) -> Option<String> {
    path.file_name().and_then(|n| n.to_str()).map(str::to_string)
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if file_name(&path).is_some_and(|n| !n.starts_with('.')) {
            entries.push(path);
        }
    }
    entries.sort();
    Ok(entries)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CatalogError::Corrupt { path: path.to_path_buf(), reason: e.to_string() })
}

pub(crate) fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("catalog documents serialize");
    bytes.push(b'\n');
    write_bytes_atomic(path, &bytes)
}

/// Write-then-rename so concurrent readers never observe a partial document.
pub(crate) fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn image(name: &str, deps: &[&str]) -> ImageRecord {
        ImageRecord {
            name: name.into(),
            tag: "1.0".into(),
            registry: "docker.io/example".into(),
            digest: sha256_digest(name.as_bytes()),
            description: String::new(),
            definition_ref: None,
            definition_version: 1,
            volumes: vec![],
            ports: vec![],
            start_command: vec![],
            software_stack: vec![],
            depends_on: deps.iter().map(|d| d.to_string()).collect(),
        }
    }

    fn service(name: &str, image: &str) -> ProvenanceServiceRecord {
        ProvenanceServiceRecord {
            image: image.into(),
            service_name: name.into(),
            requires_instrumentation: true,
            readiness: ReadinessProbe::tcp(22000, 10.0, 1.0),
            is_default: false,
        }
    }

    fn catalog() -> (tempfile::TempDir, Catalog) {
        let dir = tempfile::tempdir().unwrap();
        let cat = Catalog::open(dir.path().join("cat")).unwrap();
        (dir, cat)
    }

    #[test]
    fn dfanalyzer_registers_after_its_dependencies() {
        let (_d, cat) = catalog();
        let monet = cat.register_image(image("MonetDB", &[])).unwrap();
        let fastbit = cat.register_image(image("FastBit", &[])).unwrap();
        let dfa = cat.register_image(image("DfAnalyzer", &["MonetDB", "FastBit"])).unwrap();
        assert_eq!(monet.to_string(), "MonetDB:1.0");
        assert_eq!(fastbit.to_string(), "FastBit:1.0");
        let stored = cat.image(&dfa).unwrap().unwrap();
        assert_eq!(stored.resolved_deps, vec![monet, fastbit]);
    }

    #[test]
    fn missing_dependency_is_rejected() {
        let (_d, cat) = catalog();
        let err = cat.register_image(image("X", &["ghost"])).unwrap_err();
        assert!(matches!(err, CatalogError::UnresolvedDependency(ref d) if d == "ghost"), "{err}");
    }

    #[test]
    fn identical_registration_is_idempotent() {
        let (_d, cat) = catalog();
        let a = cat.register_image(image("A", &[])).unwrap();
        let b = cat.register_image(image("A", &[])).unwrap();
        assert_eq!(a, b);
        assert_eq!(cat.image_versions(&a).unwrap().len(), 1);
    }

    #[test]
    fn new_digest_needs_a_bump() {
        let (_d, cat) = catalog();
        let id = cat.register_image(image("A", &[])).unwrap();
        let mut changed = image("A", &[]);
        changed.digest = sha256_digest(b"other");
        let err = cat.register_image(changed.clone()).unwrap_err();
        assert!(matches!(err, CatalogError::ConflictingDigest { .. }));
        cat.register_image_with(changed.clone(), true).unwrap();
        let versions = cat.image_versions(&id).unwrap();
        assert_eq!(versions.iter().map(|v| v.record.definition_version).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(cat.image(&id).unwrap().unwrap().record.digest, changed.digest);

        let mut third = image("A", &[]);
        third.digest = sha256_digest(b"third");
        cat.register_image_with(third, true).unwrap();
        assert_eq!(cat.image(&id).unwrap().unwrap().record.definition_version, 3);

        // Reverting to an older digest would duplicate (name, tag, digest).
        let err = cat.register_image_with(image("A", &[]), true).unwrap_err();
        assert!(matches!(err, CatalogError::ConflictingDigest { .. }));
    }

    #[test]
    fn digest_validation() {
        assert!(validate_digest(&sha256_digest(b"x")).is_ok());
        assert!(validate_digest("sha256:ABC").is_err());
        assert!(validate_digest("deadbeef").is_err());
        assert!(validate_digest("sha256:abc").is_err());
        assert!(validate_digest("blake3:abc123").is_ok());
    }

    #[test]
    fn field_validation() {
        let mut r = image("A", &[]);
        r.volumes.push(VolumeSpec {
            host_path: "data".into(),
            container_path: "relative".into(),
            mode: VolumeMode::ReadOnly,
        });
        assert!(
            matches!(r.validate(), Err(CatalogError::InvalidField { ref field, .. }) if field == "volumes[0].container_path")
        );
        let mut r = image("A", &[]);
        r.ports.push(PortSpec { container_port: 0, host_port: 0 });
        assert!(r.validate().is_err());
        let mut r = image("../etc", &[]);
        r.name = "../etc".into();
        assert!(r.validate().is_err());
    }

    #[test]
    fn probe_validation() {
        assert!(ReadinessProbe::tcp(5432, 10.0, 1.0).validate("p").is_ok());
        assert!(ReadinessProbe::tcp(5432, 0.5, 1.0).validate("p").is_err());
        assert!(ReadinessProbe::tcp(5432, 1.0, 0.0).validate("p").is_err());
        let mismatched =
            ReadinessProbe { kind: ProbeKind::FileExists, target: ProbeTarget::Port(1), timeout: 1.0, interval: 1.0 };
        assert!(mismatched.validate("p").is_err());
    }

    #[test]
    fn descriptor_rejects_unknown_fields() {
        let json = r#"{"name":"A","tag":"1","registry":"r","digest":"sha256:00","colour":"red"}"#;
        assert!(serde_json::from_str::<ImageRecord>(json).is_err());
    }

    #[test]
    fn first_service_becomes_default_and_stays_unique() {
        let (_d, cat) = catalog();
        cat.register_image(image("MonetDB", &[])).unwrap();
        cat.register_image(image("FastBit", &[])).unwrap();
        cat.register_image(image("DfAnalyzer", &["MonetDB", "FastBit"])).unwrap();
        cat.register_image(image("noWorkflow", &[])).unwrap();
        cat.register_prov_service(service("DfAnalyzer", "DfAnalyzer")).unwrap();
        assert_eq!(cat.default_prov_service().unwrap().unwrap().service_name, "DfAnalyzer");
        cat.register_prov_service(service("noWorkflow", "noWorkflow:1.0")).unwrap();
        let defaults: Vec<_> = cat.prov_services().unwrap().into_iter().filter(|s| s.is_default).collect();
        assert_eq!(defaults.len(), 1);
        assert_eq!(defaults[0].service_name, "DfAnalyzer");

        cat.set_default_prov_service("noWorkflow").unwrap();
        assert_eq!(cat.default_prov_service().unwrap().unwrap().service_name, "noWorkflow");
        cat.set_default_prov_service("noWorkflow").unwrap();
        assert_eq!(cat.prov_services().unwrap().iter().filter(|s| s.is_default).count(), 1);
        assert!(matches!(cat.set_default_prov_service("ghost"), Err(CatalogError::UnknownService(_))));
        assert!(matches!(
            cat.register_prov_service(service("noWorkflow", "noWorkflow")),
            Err(CatalogError::DuplicateServiceName(_))
        ));
    }

    #[test]
    fn service_over_unregistered_image() {
        let (_d, cat) = catalog();
        let err = cat.register_prov_service(service("svc", "nothing")).unwrap_err();
        assert!(matches!(err, CatalogError::UnresolvedDependency(_)), "{err}");
    }

    #[test]
    fn closure_orders_dependencies_lexicographically() {
        let (_d, cat) = catalog();
        cat.register_image(image("MonetDB", &[])).unwrap();
        cat.register_image(image("FastBit", &[])).unwrap();
        let dfa = cat.register_image(image("DfAnalyzer", &["MonetDB", "FastBit"])).unwrap();
        let names: Vec<_> = cat.resolve_image_closure(&dfa).unwrap().into_iter().map(|i| i.name).collect();
        assert_eq!(names, ["FastBit", "MonetDB", "DfAnalyzer"]);

        let lone = cat.register_image(image("Lone", &[])).unwrap();
        assert_eq!(cat.resolve_image_closure(&lone).unwrap(), vec![lone]);
    }

    #[test]
    fn closure_reports_cycles_introduced_by_bumps() {
        let (_d, cat) = catalog();
        let b = cat.register_image(image("B", &[])).unwrap();
        let a = cat.register_image(image("A", &["B"])).unwrap();
        let mut b2 = image("B", &["A"]);
        b2.digest = sha256_digest(b"b2");
        cat.register_image_with(b2, true).unwrap();
        assert!(matches!(cat.resolve_image_closure(&a), Err(CatalogError::DependencyCycle(_))));
        assert!(matches!(cat.resolve_image_closure(&b), Err(CatalogError::DependencyCycle(_))));
    }

    #[test]
    fn bare_reference_resolution() {
        let (_d, cat) = catalog();
        cat.register_image(image("A", &[])).unwrap();
        assert_eq!(cat.resolve_ref("A").unwrap().to_string(), "A:1.0");
        let mut other = image("A", &[]);
        other.tag = "2.0".into();
        cat.register_image(other).unwrap();
        assert!(matches!(cat.resolve_ref("A"), Err(CatalogError::AmbiguousImage { .. })));
        assert!(cat.resolve_ref("A:2.0").is_ok());
    }

    #[test]
    fn definition_file_is_hashed_by_reference() {
        let (dir, cat) = catalog();
        let def = dir.path().join("monetdb.def");
        fs::write(&def, "Bootstrap: docker\nFrom: monetdb/monetdb\n").unwrap();
        let mut r = image("MonetDB", &[]);
        r.definition_ref = Some(def.to_string_lossy().into_owned());
        let id = cat.register_image(r).unwrap();
        let stored = cat.image(&id).unwrap().unwrap();
        assert_eq!(stored.definition_hash, Some(sha256_digest(&fs::read(&def).unwrap())));
    }

    #[test]
    fn empty_catalog_has_no_runs() {
        let (_d, cat) = catalog();
        assert!(cat.query_runs(&RunFilter::default()).unwrap().is_empty());
    }
}

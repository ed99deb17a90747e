//! Research objects: one self-describing archive per run.
//!
//! The archive is a plain ustar file with `manifest.json` and
//! `manifest.sha256` first and everything else in path order. Entries carry
//! no timestamps or ownership, so rebuilding from the same run directory
//! reproduces the archive byte for byte apart from the manifest's
//! `created_at`. Verification exploits that: besides re-hashing the
//! inventory it rebuilds the archive from its own contents and compares
//! bytes, which catches damage in headers and padding as well.
//!
//! Layout:
//!
//! ```text
//! manifest.json            manifest.sha256
//! spec.json  plan.json  record.json
//! logs/<activity>.stdout|.stderr
//! volumes/<container>/<index>/...      read-write bound volumes
//! images/<name>_<tag>.json             catalog records
//! definitions/<name>_<tag>/<file>      image definition files
//! attachments/<label>/<file>
//! recipe.def                           single-image regeneration recipe
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::{sha256_digest, Catalog, CatalogError, ImageId, ImageRecord, VolumeMode};
use crate::planner::DeploymentPlan;
use crate::record::RunRecord;
use crate::workflow::GroupRole;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_DIGEST: &str = "manifest.sha256";
pub const RECIPE: &str = "recipe.def";

#[derive(Debug, Error)]
pub enum WrapError {
    #[error("missing artifact {0}")]
    MissingArtifact(String),
    #[error("corrupt research object: {0}")]
    CorruptArchive(String),
    #[error("path `{0}` cannot be stored in the archive")]
    BadPath(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WrapError + '_ {
    move |source| WrapError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryEntry {
    pub path: String,
    pub size: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDescription {
    pub record: ImageRecord,
    /// Archived definition file, when the catalog entry points at one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearchObjectManifest {
    pub format_version: u32,
    pub run_id: String,
    pub created_at: String,
    pub spec: Value,
    pub plan: DeploymentPlan,
    pub record: RunRecord,
    pub images: Vec<ImageDescription>,
    /// Every archived file except the manifest and its digest.
    pub inventory: Vec<InventoryEntry>,
    /// Files from bound volumes of the provenance stack.
    pub provenance_db: Vec<String>,
    pub recipe: String,
    /// Command that redeploys the run from an extracted archive.
    pub reissue: Vec<String>,
}

impl ResearchObjectManifest {
    fn referenced_paths(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.inventory.iter().map(|e| e.path.as_str()).collect();
        out.extend(self.provenance_db.iter().map(String::as_str));
        out.push(&self.recipe);
        out.extend(self.images.iter().filter_map(|i| i.definition.as_deref()));
        for t in &self.record.activity_timings {
            out.push(&t.stdout_log);
            out.push(&t.stderr_log);
        }
        out.extend(["spec.json", "plan.json", "record.json"]);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub run_id: String,
    pub entries: usize,
    pub violations: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn read_artifact(path: &Path, label: &str) -> Result<Vec<u8>, WrapError> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(WrapError::MissingArtifact(label.to_string())),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// Regular files under `dir`, as sorted `/`-separated relative paths.
fn walk(dir: &Path) -> Result<Vec<(String, PathBuf)>, WrapError> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| WrapError::Io { path: dir.to_path_buf(), source: e.into() })?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(dir).expect("walk stays under root");
            let rel: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            out.push((rel.join("/"), entry.path().to_path_buf()));
        }
    }
    Ok(out)
}

fn file_name(path: &str) -> String {
    Path::new(path).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "file".into())
}

fn image_stem(id: &ImageId) -> String {
    format!("{}_{}", id.name, id.tag)
}

/// Collects files, then writes manifest + archive.
#[derive(Default)]
struct Contents {
    files: BTreeMap<String, Vec<u8>>,
}

impl Contents {
    fn add(&mut self, path: String, bytes: Vec<u8>) -> Result<(), WrapError> {
        if path.is_empty() || path.starts_with('/') || path.split('/').any(|c| c.is_empty() || c == "." || c == "..") {
            return Err(WrapError::BadPath(path));
        }
        self.files.insert(path, bytes);
        Ok(())
    }
}

/// Writes the research object for a terminal run to `output`.
pub fn build_research_object(
    run: &RunRecord,
    catalog: &Catalog,
    output: &Path,
) -> Result<ResearchObjectManifest, WrapError> {
    let run_dir = catalog.run_dir(&run.run_id);
    if !run_dir.is_dir() {
        return Err(WrapError::MissingArtifact(run_dir.display().to_string()));
    }
    let mut c = Contents::default();
    for name in ["spec.json", "plan.json", "record.json"] {
        c.add(name.into(), read_artifact(&run_dir.join(name), name)?)?;
    }
    let spec: Value = serde_json::from_slice(&c.files["spec.json"])
        .map_err(|e| WrapError::CorruptArchive(format!("spec.json: {e}")))?;

    for t in &run.activity_timings {
        for log in [&t.stdout_log, &t.stderr_log] {
            c.add(log.clone(), read_artifact(&run_dir.join(log), log)?)?;
        }
    }
    for a in &run.attachments {
        let bytes = read_artifact(Path::new(&a.path), &a.path)?;
        c.add(format!("attachments/{}/{}", a.label, file_name(&a.path)), bytes)?;
    }

    // Outputs left in read-write volumes, each host directory once.
    let mut seen_hosts = BTreeSet::new();
    let mut provenance_db = Vec::new();
    for container in run.plan.containers() {
        let vols = run.plan.volume_assignments.get(container).map(Vec::as_slice).unwrap_or(&[]);
        for (idx, v) in vols.iter().enumerate() {
            if v.mode != VolumeMode::ReadWrite || !seen_hosts.insert(v.host_path.clone()) {
                continue;
            }
            for (rel, path) in walk(Path::new(&v.host_path))? {
                let archived = format!("volumes/{container}/{idx}/{rel}");
                if matches!(run.plan.roles.get(container), Some(GroupRole::ProvService | GroupRole::Dbms)) {
                    provenance_db.push(archived.clone());
                }
                c.add(archived, fs::read(&path).map_err(io_err(&path))?)?;
            }
        }
    }

    let mut images = Vec::new();
    for (id, digest) in &run.plan.image_digests {
        let stored = catalog
            .image_versions(id)?
            .into_iter()
            .rev()
            .find(|v| &v.record.digest == digest)
            .ok_or_else(|| WrapError::MissingArtifact(format!("catalog image {id} with digest {digest}")))?;
        let stem = image_stem(id);
        c.add(format!("images/{stem}.json"), serde_json::to_vec_pretty(&stored.record).expect("image serializes"))?;
        let definition = match &stored.record.definition_ref {
            Some(def) => match fs::read(def) {
                Ok(bytes) => {
                    let path = format!("definitions/{stem}/{}", file_name(def));
                    c.add(path.clone(), bytes)?;
                    Some(path)
                }
                Err(_) => None,
            },
            None => None,
        };
        images.push(ImageDescription { record: stored.record, definition });
    }
    c.add(RECIPE.into(), recipe(run, &images).into_bytes())?;

    let inventory = c
        .files
        .iter()
        .map(|(path, bytes)| InventoryEntry {
            path: path.clone(),
            size: bytes.len() as u64,
            sha256: sha256_digest(bytes),
        })
        .collect();
    let manifest = ResearchObjectManifest {
        format_version: FORMAT_VERSION,
        run_id: run.run_id.clone(),
        created_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        spec,
        plan: run.plan.clone(),
        record: run.clone(),
        images,
        inventory,
        provenance_db,
        recipe: RECIPE.into(),
        reissue: vec!["provforge".into(), "deploy".into(), "spec.json".into()],
    };
    let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    manifest_bytes.push(b'\n');
    let digest = format!("{}  {MANIFEST}\n", sha256_digest(&manifest_bytes));

    let mut entries = vec![(MANIFEST.to_string(), manifest_bytes), (MANIFEST_DIGEST.to_string(), digest.into_bytes())];
    entries.extend(c.files);
    let archive = write_archive(&entries)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    crate::catalog::write_bytes_atomic(output, &archive)?;
    Ok(manifest)
}

/// Apptainer-style definition that folds every image of the run into one.
fn recipe(run: &RunRecord, images: &[ImageDescription]) -> String {
    let plan = &run.plan;
    let base = plan
        .containers()
        .into_iter()
        .find(|c| plan.roles.get(*c) == Some(&GroupRole::Workflow))
        .and_then(|c| plan.phases.iter().find(|p| p.container == c))
        .and_then(|p| images.iter().find(|i| i.record.id() == p.image))
        .or(images.first());
    let mut s = String::new();
    s.push_str(&format!("# Regeneration recipe for run {}\n", run.run_id));
    s.push_str("Bootstrap: docker\n");
    if let Some(b) = base {
        s.push_str(&format!("From: {}\n", b.record.reference()));
    }
    s.push_str("\n%labels\n");
    for (k, v) in [
        ("run_id", run.run_id.as_str()),
        ("workflow", run.workflow_name.as_str()),
        ("strategy", run.strategy.as_str()),
        ("prov_service", run.prov_service.as_str()),
        ("environment", run.environment_label.as_str()),
    ] {
        s.push_str(&format!("    {k} {v}\n"));
    }
    s.push_str("\n%post\n");
    for i in images {
        s.push_str(&format!("    # {} {}\n", i.record.reference(), i.record.digest));
        for p in &i.record.software_stack {
            s.push_str(&format!("    #   {} {}\n", p.name, p.version));
        }
    }
    s.push_str("\n%startscript\n");
    for c in plan.containers() {
        for cmd in plan.entry_sequences.get(c).into_iter().flatten() {
            s.push_str(&format!("    {} &\n", cmd.join(" ")));
        }
    }
    s.push_str("\n%runscript\n");
    for p in plan.phases.iter().filter(|p| p.activity.is_some()) {
        s.push_str(&format!("    {}\n", p.argv.join(" ")));
    }
    s
}

fn write_archive(entries: &[(String, Vec<u8>)]) -> Result<Vec<u8>, WrapError> {
    let mut builder = tar::Builder::new(Vec::new());
    for (path, bytes) in entries {
        let mut header = tar::Header::new_ustar();
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder.append_data(&mut header, path, bytes.as_slice()).map_err(|_| WrapError::BadPath(path.clone()))?;
    }
    builder.into_inner().map_err(|e| WrapError::Io { path: PathBuf::from("<archive>"), source: e })
}

fn read_entries(bytes: &[u8]) -> Result<Vec<(String, Vec<u8>)>, WrapError> {
    let corrupt = |e: std::io::Error| WrapError::CorruptArchive(e.to_string());
    let mut archive = tar::Archive::new(bytes);
    let mut out = Vec::new();
    for entry in archive.entries().map_err(corrupt)? {
        let mut entry = entry.map_err(corrupt)?;
        if entry.header().entry_type() != tar::EntryType::Regular {
            return Err(WrapError::CorruptArchive("unexpected non-file entry".into()));
        }
        let path = entry.path().map_err(corrupt)?.to_string_lossy().into_owned();
        let mut data = Vec::new();
        entry.read_to_end(&mut data).map_err(corrupt)?;
        out.push((path, data));
    }
    Ok(out)
}

/// Reads the manifest of an archive without verifying it.
pub fn read_manifest(archive: &Path) -> Result<ResearchObjectManifest, WrapError> {
    let bytes = fs::read(archive).map_err(io_err(archive))?;
    let entries = read_entries(&bytes)?;
    let (_, m) = entries
        .iter()
        .find(|(p, _)| p == MANIFEST)
        .ok_or_else(|| WrapError::CorruptArchive("no manifest.json".into()))?;
    serde_json::from_slice(m).map_err(|e| WrapError::CorruptArchive(format!("manifest.json: {e}")))
}

/// Re-hashes every inventory entry and checks the manifest's references.
/// Read-only.
pub fn verify_research_object(archive: &Path) -> Result<VerifyReport, WrapError> {
    let bytes = fs::read(archive).map_err(io_err(archive))?;
    let entries = read_entries(&bytes)?;
    let files: BTreeMap<&str, &[u8]> = entries.iter().map(|(p, d)| (p.as_str(), d.as_slice())).collect();
    let manifest_bytes = *files.get(MANIFEST).ok_or_else(|| WrapError::CorruptArchive("no manifest.json".into()))?;
    let manifest: ResearchObjectManifest =
        serde_json::from_slice(manifest_bytes).map_err(|e| WrapError::CorruptArchive(format!("manifest.json: {e}")))?;

    let mut violations = Vec::new();
    if manifest.format_version != FORMAT_VERSION {
        violations.push(format!("unsupported format_version {}", manifest.format_version));
    }
    let expected_digest = format!("{}  {MANIFEST}\n", sha256_digest(manifest_bytes));
    match files.get(MANIFEST_DIGEST) {
        Some(d) if *d == expected_digest.as_bytes() => {}
        Some(_) => violations.push(format!("{MANIFEST_DIGEST}: does not match {MANIFEST}")),
        None => violations.push(format!("{MANIFEST_DIGEST}: missing")),
    }
    if files.len() != entries.len() {
        violations.push("duplicate archive entries".into());
    }
    if entries.first().map(|(p, _)| p.as_str()) != Some(MANIFEST) {
        violations.push(format!("{MANIFEST} is not the first entry"));
    }
    if manifest.record.run_id != manifest.run_id || manifest.record.plan != manifest.plan {
        violations.push("manifest run record disagrees with its header fields".into());
    }

    let listed: BTreeSet<&str> = manifest.inventory.iter().map(|e| e.path.as_str()).collect();
    for e in &manifest.inventory {
        match files.get(e.path.as_str()) {
            None => violations.push(format!("{}: listed but not archived", e.path)),
            Some(data) => {
                if data.len() as u64 != e.size {
                    violations.push(format!("{}: size {} but inventory says {}", e.path, data.len(), e.size));
                }
                if sha256_digest(data) != e.sha256 {
                    violations.push(format!("{}: content hash mismatch", e.path));
                }
            }
        }
    }
    for path in files.keys() {
        if *path != MANIFEST && *path != MANIFEST_DIGEST && !listed.contains(path) {
            violations.push(format!("{path}: archived but not in the inventory"));
        }
    }
    for path in manifest.referenced_paths() {
        if !files.contains_key(path) {
            violations.push(format!("{path}: referenced by the manifest but absent"));
        }
    }
    if let Some(Ok(record)) = files.get("record.json").map(|r| serde_json::from_slice::<RunRecord>(r)) {
        if record != manifest.record {
            violations.push("record.json differs from the manifest's record".into());
        }
    }

    // Header and padding damage survives the checks above; a canonical
    // rebuild from the extracted contents must match byte for byte.
    match write_archive(&entries) {
        Ok(canonical) if canonical == bytes => {}
        Ok(canonical) => {
            let at = canonical.iter().zip(&bytes).position(|(a, b)| a != b).unwrap_or(canonical.len().min(bytes.len()));
            violations.push(format!("archive structure differs from canonical form at byte {at}"));
        }
        Err(e) => violations.push(format!("archive cannot be rebuilt: {e}")),
    }

    Ok(VerifyReport { run_id: manifest.run_id, entries: entries.len(), violations })
}

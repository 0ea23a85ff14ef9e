//! Run manifests: file inventory with digests plus per-check outcomes.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The check does not apply because its hypotheses fail.
    HypothesesUnmet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Relation::Lt => value < threshold,
            Relation::Le => value <= threshold,
            Relation::Gt => value > threshold,
            Relation::Ge => value >= threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Ge => ">=",
        }
    }
}

/// One measured invariant against its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: Option<f64>,
    pub relation: Option<Relation>,
    pub threshold: Option<f64>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl CheckOutcome {
    pub fn compare(name: impl Into<String>, value: f64, relation: Relation, threshold: f64) -> Self {
        let pass = !value.is_nan() && relation.holds(value, threshold);
        Self {
            name: name.into(),
            value: finite(value),
            relation: Some(relation),
            threshold: finite(threshold),
            status: if pass { Status::Pass } else { Status::Fail },
            detail: (!value.is_finite()).then(|| format!("value {value}")),
        }
    }

    pub fn unmet(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: None,
            relation: None,
            threshold: None,
            status: Status::HypothesesUnmet,
            detail: Some(format!("hypotheses unmet: {}", reason.into())),
        }
    }

    pub fn failed(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: None,
            relation: None,
            threshold: None,
            status: Status::Fail,
            detail: Some(reason.into()),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS ",
            Status::Fail => "FAIL ",
            Status::HypothesesUnmet => "UNMET",
        };
        write!(f, "{tag} {}", self.name)?;
        if let (Some(r), Some(t)) = (self.relation, self.threshold) {
            match self.value {
                Some(v) => write!(f, "  value={v:.6e} {} threshold={t:.6e}", r.symbol())?,
                None => write!(f, "  value=n/a {} threshold={t:.6e}", r.symbol())?,
            }
        }
        if let Some(d) = &self.detail {
            write!(f, "  ({d})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileEntry>,
    pub checks: Vec<CheckOutcome>,
    /// Set when the run stopped early; listed files are then partial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_file(path: &Path) -> CliResult<(u64, String)> {
    let bytes = std::fs::read(path)?;
    Ok((bytes.len() as u64, format!("{:x}", Sha256::digest(&bytes))))
}

/// Output directory that remembers every file written through it.
#[derive(Debug)]
pub struct Outputs {
    pub dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    pub fn create(dir: PathBuf) -> CliResult<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Register a file written by other means.
    pub fn add(&mut self, path: PathBuf) {
        if !self.files.contains(&path) {
            self.files.push(path);
        }
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        self.add(path);
        Ok(())
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(BufWriter<File>) -> CliResult<()>) -> CliResult<()> {
        let path = self.path(name);
        f(BufWriter::new(File::create(&path)?))?;
        self.add(path);
        Ok(())
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn inventory(&self) -> CliResult<Vec<FileEntry>> {
        self.files
            .iter()
            .map(|p| {
                let (bytes, sha256) = sha256_file(p)?;
                let rel = p.strip_prefix(&self.dir).unwrap_or(p);
                Ok(FileEntry { path: rel.to_string_lossy().replace('\\', "/"), bytes, sha256 })
            })
            .collect()
    }
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Manifest(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileProblem {
    Missing(String),
    Altered(String),
}

impl fmt::Display for FileProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FileProblem::Missing(p) => write!(f, "missing: {p}"),
            FileProblem::Altered(p) => write!(f, "altered: {p}"),
        }
    }
}

/// Compare the inventory in `dir/manifest.json` against the files on disk.
pub fn verify_manifest(dir: &Path) -> CliResult<Vec<FileProblem>> {
    let m = RunManifest::read(dir)?;
    let mut problems = Vec::new();
    for entry in &m.files {
        let path = dir.join(&entry.path);
        if !path.is_file() {
            problems.push(FileProblem::Missing(entry.path.clone()));
            continue;
        }
        let (bytes, sha) = sha256_file(&path)?;
        if bytes != entry.bytes || sha != entry.sha256 {
            problems.push(FileProblem::Altered(entry.path.clone()));
        }
    }
    Ok(problems)
}

//! Output directories, checksums and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grid::Field;
use crate::model::RegimeClassification;
use crate::monitors::Verdict;
use crate::operators::FluxSpec;
use crate::stepper::{BalanceSummary, RunOutcome};

use super::config::ConfigFile;
use super::HarnessError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Either a verdict or the reason none could be formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VerdictEntry {
    Verdict(Verdict),
    Unavailable { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub started: String,
    pub finished: String,
    pub config_path: Option<String>,
    /// Every key with defaults filled in.
    pub config: ConfigFile,
    #[serde(default)]
    pub unknown_keys: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<RunOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<RegimeClassification>,
    /// `max |∂u₀/∂ν − g(u₀)|` over boundary faces, `g` the prescribed flux.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compatibility_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance: Option<BalanceSummary>,
    #[serde(default)]
    pub verdicts: BTreeMap<String, VerdictEntry>,
    /// Command-specific extras (sweep counts, lab summaries).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
    pub files: Vec<FileEntry>,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn sha256_file(path: &Path) -> Result<(u64, String), HarnessError> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

pub fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    file.write_all(contents).map_err(|e| HarnessError::io(&tmp, e))?;
    file.sync_all().map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

/// Tracks the files a command writes below one directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, HarnessError> {
        create_dir(root)?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> Result<PathBuf, HarnessError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            create_dir(parent)?;
        }
        write_atomic(&path, contents)?;
        self.files.push(rel.to_string());
        Ok(path)
    }

    pub fn write_field(&mut self, rel: &str, field: &Field) -> Result<PathBuf, HarnessError> {
        let mut buf = Vec::new();
        field.write_csv(&mut buf)?;
        self.write(rel, &buf)
    }

    /// Records a file some other writer put below the root.
    pub fn adopt(&mut self, rel: &str) {
        self.files.push(rel.to_string());
    }

    pub fn inventory(&self) -> Result<Vec<FileEntry>, HarnessError> {
        self.files
            .iter()
            .map(|rel| {
                let (bytes, sha256) = sha256_file(&self.root.join(rel))?;
                Ok(FileEntry { path: rel.clone(), bytes, sha256 })
            })
            .collect()
    }

    /// Fills the inventory and writes `manifest.json` last.
    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest, HarnessError> {
        manifest.files = self.inventory()?;
        manifest.finished = now();
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| HarnessError::Output(e.to_string()))?;
        write_atomic(&self.root.join(MANIFEST), &json)?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, HarnessError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))
}

/// Files whose size or checksum differs from the manifest, or that are gone.
pub fn verify_manifest(dir: &Path, manifest: &RunManifest) -> Vec<String> {
    manifest
        .files
        .iter()
        .filter_map(|entry| match sha256_file(&dir.join(&entry.path)) {
            Ok((bytes, sum)) if bytes == entry.bytes && sum == entry.sha256 => None,
            Ok(_) => Some(format!("{}: checksum mismatch", entry.path)),
            Err(e) => Some(format!("{}: {e}", entry.path)),
        })
        .collect()
}

/// `max |(f₀ − f₁)/h − g(trace)|` over the boundary faces, with the one-sided
/// difference as the discrete outward derivative.
pub fn compatibility_residual(u0: &Field, flux: FluxSpec) -> f64 {
    let grid = u0.grid();
    let vals = u0.values();
    grid.boundary_faces()
        .iter()
        .map(|face| {
            let dn = (vals[face.cell] - vals[face.inner]) / grid.h(face.axis);
            (dn - flux.normal_derivative(u0.face_trace(face))).abs()
        })
        .fold(0.0, f64::max)
}

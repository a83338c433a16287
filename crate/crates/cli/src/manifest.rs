use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Mode;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    /// Checksums `path`; the entry is recorded under `name` when given.
    pub fn of(path: &Path, name: Option<&str>) -> std::io::Result<Self> {
        let data = fs::read(path)?;
        Ok(FileEntry {
            path: name.map_or_else(|| path.display().to_string(), str::to_string),
            bytes: data.len() as u64,
            sha256: sha256_hex(&data),
        })
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    format!("{:x}", Sha256::digest(data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestError {
    pub kind: String,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub program: String,
    pub version: String,
    pub mode: Mode,
    pub status: Status,
    pub error: Option<ManifestError>,
    /// Reserved; every pipeline is deterministic.
    pub seed: Option<u64>,
    pub inputs: Vec<FileEntry>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileEntry>,
    pub summary: Value,
    /// Resolved configuration, every default filled in. `None` when the
    /// config could not be read.
    pub config: Option<Value>,
}

impl Manifest {
    pub fn new(mode: Mode, seed: Option<u64>) -> Self {
        Manifest {
            manifest_version: MANIFEST_VERSION,
            program: "hbnwave".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            mode,
            status: Status::Ok,
            error: None,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: Value::Null,
            config: None,
        }
    }

    pub fn fail(&mut self, kind: &str, messages: Vec<String>) {
        self.status = Status::Failed;
        self.error = Some(ManifestError { kind: kind.into(), messages });
        self.outputs.clear();
        self.summary = Value::Null;
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_NAME), text)
    }
}

/// Deletes the outputs and manifest of an earlier run in `dir`, if any.
pub fn clear_previous(dir: &Path) -> std::io::Result<()> {
    let Ok(old) = Manifest::read(dir) else { return Ok(()) };
    for entry in &old.outputs {
        let p = dir.join(&entry.path);
        if p.starts_with(dir) && p.is_file() {
            fs::remove_file(p)?;
        }
    }
    fs::remove_file(dir.join(MANIFEST_NAME))
}

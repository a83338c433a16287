//! Batch runner for the `hbnwave` pipelines.
//!
//! A job is a mode plus a JSON config. Outputs are staged in a hidden
//! directory and moved into place only when the whole job succeeded, then a
//! `manifest.json` lists them with SHA-256 checksums next to the fully
//! resolved config. A failed job leaves only a manifest marked `failed`.

pub mod config;
pub mod manifest;
mod pipeline;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{Config, Diagnostic};
pub use manifest::{FileEntry, Manifest, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Propagate,
    Sweep,
    Farfield,
    SliceDump,
}

#[derive(Debug, Clone)]
pub struct JobSpec {
    pub mode: Mode,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", list(.0))]
    Config(Vec<Diagnostic>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Runtime(String),
}

fn list(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Runtime(_) => "runtime",
        }
    }

    fn messages(&self) -> Vec<String> {
        match self {
            CliError::Config(d) => d.iter().map(ToString::to_string).collect(),
            e => vec![e.to_string()],
        }
    }
}

impl From<hbnwave::Error> for CliError {
    fn from(e: hbnwave::Error) -> Self {
        use hbnwave::Error as E;
        match e {
            E::Numerical { .. } => CliError::Numerical(e.to_string()),
            E::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Config(vec![Diagnostic::new("", e.to_string())]),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Every problem with a config file after `overrides`, or none.
pub fn validate(config_path: &Path, overrides: &[String]) -> Vec<Diagnostic> {
    config::load_resolved(config_path, overrides).err().unwrap_or_default()
}

/// Runs a job and writes its manifest. On failure the output directory is
/// left holding only a manifest marked failed.
pub fn run(job: &JobSpec) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(&job.output_dir)?;
    manifest::clear_previous(&job.output_dir)?;
    let mut manifest = Manifest::new(job.mode, job.seed);
    let result = execute(job, &mut manifest);
    if let Err(e) = &result {
        manifest.fail(e.kind(), e.messages());
    }
    manifest.write(&job.output_dir)?;
    result.map(|_| manifest)
}

fn execute(job: &JobSpec, manifest: &mut Manifest) -> Result<(), CliError> {
    let resolved = config::load_resolved(&job.config_path, &job.overrides).map_err(CliError::Config)?;
    manifest.config = Some(serde_json::to_value(&resolved.config).expect("config serialises"));
    manifest.inputs.push(FileEntry::of(&resolved.species_path, None)?);
    if let (Mode::Farfield, Some(input)) = (job.mode, &resolved.config.farfield.input) {
        manifest.inputs.push(FileEntry::of(input, None)?);
    }
    let mut staging = pipeline::Staging::new(&job.output_dir)?;
    manifest.summary = match job.mode {
        Mode::SliceDump => pipeline::slice_dump(&resolved, &mut staging)?,
        Mode::Propagate => pipeline::propagate(&resolved, &mut staging)?,
        Mode::Farfield => pipeline::farfield(&resolved, &mut staging)?,
        Mode::Sweep => pipeline::sweep(&resolved, &mut staging)?,
    };
    manifest.outputs = staging.commit()?;
    Ok(())
}

//! Run manifests: everything needed to re-execute a command and check that
//! its reports come out byte for byte the same.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::exit::{config_err, data_err, Failure};
use crate::invocation::Invocation;

pub const MANIFEST_FORMAT: &str = "xabsa-run";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// A file written by a command. Paths of files inside the output directory
/// are relative to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub path: PathBuf,
    /// Compared byte for byte on replay.
    pub reproducible: bool,
}

impl Artifact {
    pub fn report(name: &str, path: impl Into<PathBuf>) -> Self {
        Self { name: name.into(), path: path.into(), reproducible: true }
    }

    pub fn other(name: &str, path: impl Into<PathBuf>) -> Self {
        Self { name: name.into(), path: path.into(), reproducible: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub git_revision: Option<String>,
    /// The resolved invocation, config snapshot included.
    pub invocation: Invocation,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<Artifact>,
    pub timing: Timing,
}

fn git_revision() -> Option<String> {
    let out = Process::new("git").args(["rev-parse", "--short=12", "HEAD"]).output().ok()?;
    out.status.success().then(|| String::from_utf8_lossy(&out.stdout).trim().to_owned()).filter(|s| !s.is_empty())
}

impl RunManifest {
    pub fn new(invocation: Invocation, artifacts: Vec<Artifact>, started: SystemTime, elapsed: Duration) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            git_revision: git_revision(),
            seeds: invocation.seeds(),
            invocation,
            artifacts,
            timing: Timing {
                started_unix_ms: started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis()),
                elapsed_ms: elapsed.as_millis(),
            },
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, Failure> {
        let path = out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| data_err(e.into()))?;
        fs::write(&path, text + "\n")
            .with_context(|| format!("writing {}", path.display()))
            .map_err(data_err)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(config_err)?;
        let m: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))
            .map_err(config_err)?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(config_err(anyhow::anyhow!(
                "unsupported manifest {} v{} in {}",
                m.format,
                m.version,
                path.display()
            )));
        }
        Ok(m)
    }
}

/// Names of reproducible artifacts whose bytes differ between two output
/// directories, or that are missing from either.
pub fn compare_artifacts(artifacts: &[Artifact], original: &Path, replayed: &Path) -> Vec<String> {
    artifacts
        .iter()
        .filter(|a| a.reproducible)
        .filter(|a| {
            let a_bytes = fs::read(original.join(&a.path));
            let b_bytes = fs::read(replayed.join(&a.path));
            !matches!((a_bytes, b_bytes), (Ok(x), Ok(y)) if x == y)
        })
        .map(|a| a.name.clone())
        .collect()
}

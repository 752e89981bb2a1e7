use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// A file path, or `preset:<name>` for built-in configs.
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
    }

    pub fn of_preset(name: &str, text: &str) -> Self {
        FileDigest { path: format!("preset:{name}"), sha256: sha256_hex(text.as_bytes()) }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// The invocation with absolute paths; replayed by `aircatch rerun`.
    pub invocation: Command,
    /// Resolved configuration, TOML.
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub exit_code: i32,
    pub tool_version: String,
    pub wall_clock_s: f64,
    #[serde(default)]
    pub details: serde_json::Map<String, serde_json::Value>,
}

/// Where the manifest of a run writing to `out` lives.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
}

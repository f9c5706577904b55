//! Run manifests: resolved configuration plus a SHA-256 checksum for every
//! file the run emitted.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Creation timestamp (RFC 3339); the only field allowed to differ
    /// between reproduced runs.
    pub created: String,
    pub seed: u64,
    /// Fully resolved configuration, defaults materialized.
    pub config: Value,
    /// Relative path → SHA-256 hex digest, for every emitted file.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn collect_files(dir: &Path, root: &Path, files: &mut BTreeMap<String, String>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, root, files)?;
            continue;
        }
        let rel = path
            .strip_prefix(root)
            .expect("path under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if rel == MANIFEST_FILE {
            continue;
        }
        files.insert(rel, sha256_file(&path)?);
    }
    Ok(())
}

impl Manifest {
    /// Checksum every file currently in `out_dir` (except the manifest
    /// itself) and bundle it with the resolved config.
    pub fn scan(out_dir: &Path, seed: u64, config: Value) -> Result<Manifest> {
        let mut files = BTreeMap::new();
        collect_files(out_dir, out_dir, &mut files)?;
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            created: chrono::Utc::now().to_rfc3339(),
            seed,
            config,
            files,
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(out_dir: &Path) -> Result<Manifest> {
        let path = out_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Equality up to the creation timestamp.
    pub fn same_run(&self, other: &Manifest) -> bool {
        self.tool == other.tool
            && self.version == other.version
            && self.seed == other.seed
            && self.config == other.config
            && self.files == other.files
    }

    /// Paths whose on-disk checksum no longer matches the manifest.
    pub fn verify(&self, out_dir: &Path) -> Result<Vec<String>> {
        let mut stale = Vec::new();
        for (rel, digest) in &self.files {
            let path = out_dir.join(rel);
            if !path.exists() || &sha256_file(&path)? != digest {
                stale.push(rel.clone());
            }
        }
        Ok(stale)
    }
}

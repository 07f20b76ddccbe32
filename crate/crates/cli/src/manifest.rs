use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const RESULTS: &str = "results.json";
pub const CONFIG: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

/// Record of one run. Contains nothing time- or host-dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
    /// Canonical config; re-running it reproduces the results.
    pub config: String,
    pub files: Vec<FileEntry>,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, String> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("corrupt {}: {e}", path.display()))
    }

    /// Checks every listed file against its recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<(), String> {
        for f in &self.files {
            let bytes = fs::read(dir.join(&f.name)).map_err(|e| format!("missing {}: {e}", f.name))?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(format!("{} does not match the manifest", f.name));
            }
        }
        if sha256_hex(self.config.as_bytes()) != self.config_sha256 {
            return Err("embedded config does not match its hash".into());
        }
        Ok(())
    }
}

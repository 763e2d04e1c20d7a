//! Artifact writing. Every run leaves `manifest.json` next to its files; it
//! records the effective configuration, its hash, the seed, crate versions, a
//! timestamp, the SHA-256 of each file and the outcome of each check.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

pub struct Run {
    dir: PathBuf,
    command: &'static str,
    config: Value,
    seed: u64,
    files: Vec<FileEntry>,
    checks: Vec<Check>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of a configuration.
pub fn config_hash(config: &Value) -> String {
    sha256_hex(config.to_string().as_bytes())
}

impl Run {
    pub fn create(out_dir: &Path, command: &'static str, config: Value, seed: u64) -> Result<Self, Failure> {
        let dir = out_dir.join(command);
        std::fs::create_dir_all(&dir)
            .map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            command,
            config,
            seed,
            files: Vec::new(),
            checks: Vec::new(),
        })
    }

    pub fn bytes(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), Failure> {
        let path = self.dir.join(name);
        std::fs::write(&path, &bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        self.files.push(FileEntry {
            name: name.into(),
            bytes: bytes.len(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn csv<S: Serialize, I: IntoIterator<Item = S>>(&mut self, name: &str, rows: I) -> Result<(), Failure> {
        let mut buf = Vec::new();
        hipster_core::io::write_csv(&mut buf, rows)?;
        self.bytes(name, buf)
    }

    pub fn json<S: Serialize + ?Sized>(&mut self, name: &str, value: &S) -> Result<(), Failure> {
        let mut buf = Vec::new();
        hipster_core::io::write_json(&mut buf, value)?;
        self.bytes(name, buf)
    }

    /// Writes through a caller-supplied encoder.
    pub fn with<F>(&mut self, name: &str, encode: F) -> Result<(), Failure>
    where
        F: FnOnce(&mut Vec<u8>) -> hipster_core::Result<()>,
    {
        let mut buf = Vec::new();
        encode(&mut buf)?;
        self.bytes(name, buf)
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail,
        });
    }

    /// Writes the manifest and turns failed checks into an assertion failure.
    pub fn finish(self) -> Result<(), Failure> {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = json!({
            "command": self.command,
            "config_hash": config_hash(&self.config),
            "seed": self.seed,
            "config": self.config,
            "versions": {
                "hipster-cli": env!("CARGO_PKG_VERSION"),
                "hipster-core": hipster_core::VERSION,
            },
            "timestamp_unix": timestamp,
            "files": self.files,
            "checks": self.checks,
        });
        let path = self.dir.join("manifest.json");
        let mut buf = Vec::new();
        hipster_core::io::write_json(&mut buf, &manifest)?;
        std::fs::write(&path, buf).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        println!("wrote {} files to {}", self.files.len() + 1, self.dir.display());
        let failed: Vec<String> = self.checks.into_iter().filter(|c| !c.pass).map(|c| c.name).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Failure::Assertion(failed))
        }
    }
}

//! Run manifests: every command writes its outputs through a builder that
//! hashes them, then lands `manifest.json` atomically as the last artifact.
//! The `run_hash` covers the config hash, the seed and all output hashes —
//! wall-clock phase timings are recorded but excluded, so identical inputs
//! reproduce an identical hash.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subplan_core::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub outputs: Vec<OutputEntry>,
    pub phases: Vec<PhaseEntry>,
    pub run_hash: String,
}

impl RunManifest {
    pub fn load<P: AsRef<Path>>(path: P) -> Result<RunManifest> {
        let bytes = fs::read(path.as_ref())?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("invalid manifest: {e}")))
    }
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    to_hex(hasher.finalize().as_slice())
}

pub struct ManifestBuilder {
    command: String,
    config_hash: String,
    master_seed: u64,
    out_dir: PathBuf,
    outputs: Vec<OutputEntry>,
    phases: Vec<PhaseEntry>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config_bytes: &[u8], master_seed: u64, out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        let mut hasher = Sha256::new();
        hasher.update(config_bytes);
        hasher.update(master_seed.to_le_bytes());
        Ok(ManifestBuilder {
            command: command.to_string(),
            config_hash: to_hex(hasher.finalize().as_slice()),
            master_seed,
            out_dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
            phases: Vec::new(),
        })
    }

    /// Write one output file under the run directory and record its hash.
    pub fn write_output(&mut self, rel_path: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(rel_path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.outputs.push(OutputEntry {
            path: rel_path.to_string(),
            sha256: hex_digest(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn record_phase(&mut self, name: &str, seconds: f64) {
        self.phases.push(PhaseEntry {
            name: name.to_string(),
            seconds,
        });
    }

    /// Compute the run hash and write `manifest.json` atomically.
    pub fn finish(self) -> Result<RunManifest> {
        let mut hasher = Sha256::new();
        hasher.update(self.config_hash.as_bytes());
        hasher.update(self.master_seed.to_le_bytes());
        for out in &self.outputs {
            hasher.update(out.path.as_bytes());
            hasher.update(out.sha256.as_bytes());
        }
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config_hash,
            master_seed: self.master_seed,
            outputs: self.outputs,
            phases: self.phases,
            run_hash: to_hex(hasher.finalize().as_slice()),
        };
        let bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        let tmp = self.out_dir.join("manifest.json.tmp");
        let path = self.out_dir.join("manifest.json");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &path)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hash_ignores_phase_timings() {
        let dir = tempfile::tempdir().unwrap();
        let build = |secs: f64| {
            let mut b =
                ManifestBuilder::new("run", b"config", 7, dir.path()).unwrap();
            b.write_output("log.csv", b"a,b\n1,2\n").unwrap();
            b.record_phase("solve", secs);
            b.finish().unwrap()
        };
        let m1 = build(0.5);
        let m2 = build(123.0);
        assert_eq!(m1.run_hash, m2.run_hash);
        assert_eq!(m1.config_hash, m2.config_hash);
        assert_ne!(m1.phases, m2.phases);
    }

    #[test]
    fn manifest_lands_on_disk_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = ManifestBuilder::new("diagram", b"cfg", 1, dir.path()).unwrap();
        b.write_output("x.csv", b"1\n").unwrap();
        let written = b.finish().unwrap();
        let loaded = RunManifest::load(dir.path().join("manifest.json")).unwrap();
        assert_eq!(written, loaded);
        assert!(!dir.path().join("manifest.json.tmp").exists());
    }

    #[test]
    fn different_outputs_change_the_run_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = ManifestBuilder::new("run", b"cfg", 1, dir.path()).unwrap();
        a.write_output("log.csv", b"1\n").unwrap();
        let mut b = ManifestBuilder::new("run", b"cfg", 1, dir.path()).unwrap();
        b.write_output("log.csv", b"2\n").unwrap();
        assert_ne!(a.finish().unwrap().run_hash, b.finish().unwrap().run_hash);
    }
}

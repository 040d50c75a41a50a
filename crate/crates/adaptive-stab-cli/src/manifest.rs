use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use adaptive_stab::{Error, Result};

pub const VERSION: &str = env!("ADAPTIVE_STAB_VERSION");

/// Record of one command invocation, written as `manifest.json` next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub threads: Option<usize>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub certificate_hashes: BTreeMap<String, String>,
    pub exit_code: i32,
}

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
    hashes: BTreeMap<String, String>,
    started: Instant,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Numeric(format!("cannot write {}: {e}", path.display()))
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| io(root, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new(), hashes: BTreeMap::new(), started: Instant::now() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(format!("serialise {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Record the hash of a certificate file read or written by this run.
    pub fn hash_certificate(&mut self, label: &str, bytes: &[u8]) {
        self.hashes.insert(label.to_string(), sha256_hex(bytes));
    }

    pub fn finish(mut self, command: &str, config: Value, seeds: BTreeMap<String, u64>, threads: Option<usize>, exit_code: i32) -> Result<()> {
        let m = RunManifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            version: VERSION.to_string(),
            config,
            seeds,
            threads,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.written.clone(),
            certificate_hashes: std::mem::take(&mut self.hashes),
            exit_code,
        };
        self.write_json("manifest.json", &m)
    }
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Record of one invocation, written next to the command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub working_dir: PathBuf,
    pub threads: usize,
    /// Input config name → sha256 of its canonical content.
    pub config_hashes: BTreeMap<String, String>,
    /// Value-table role → sha256 of the table file or cache key.
    pub value_tables: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
    /// Phase name → wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn start() -> Self {
        Self {
            tool: env!("CARGO_BIN_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::env::args().collect(),
            working_dir: std::env::current_dir().unwrap_or_default(),
            threads: rayon::current_num_threads(),
            config_hashes: BTreeMap::new(),
            value_tables: BTreeMap::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn config(&mut self, name: &str, digest: impl AsRef<[u8]>) {
        self.config_hashes.insert(name.to_string(), hex(digest.as_ref()));
    }

    pub fn table_file(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.value_tables.insert(role.to_string(), hex(&Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    /// Runs `f`, recording its duration under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.insert(phase.to_string(), t.elapsed().as_secs_f64());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

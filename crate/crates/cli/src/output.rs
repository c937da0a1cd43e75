use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use qmc_core::points::export::format_g17;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Record written next to every command's outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// Arguments after the program name, without `--out` and `--threads`.
    pub args: Vec<String>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_seconds: f64,
    /// SHA-256 of each deterministic output file.
    pub outputs: BTreeMap<String, String>,
    pub success: bool,
}

pub const MANIFEST: &str = "manifest.json";

/// Output directory with digest bookkeeping.
pub struct Output {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

impl Output {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), digests: BTreeMap::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes a deterministic output and records its digest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        fs::write(self.path(name), bytes).with_context(|| format!("writing {name}"))?;
        self.digests.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Writes an output that is expected to differ between runs.
    pub fn write_volatile(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        fs::write(self.path(name), bytes).with_context(|| format!("writing {name}"))
    }

    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }

    pub fn write_manifest(&self, m: &Manifest) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(m)?;
        fs::write(self.path(MANIFEST), text + "\n").context("writing manifest")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn strip_volatile_args(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" || a == "--threads" {
            skip = true;
            continue;
        }
        if a.starts_with("--out=") || a.starts_with("--threads=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}

/// Comma-separated table with a fixed header.
pub struct Csv {
    text: String,
    cols: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: header.join(",") + "\n", cols: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.cols);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn bytes(&self) -> &[u8] {
        self.text.as_bytes()
    }
}

pub fn g(x: f64) -> String {
    format_g17(x)
}

/// Empty cell for a missing value.
pub fn opt(x: Option<f64>) -> String {
    x.map(format_g17).unwrap_or_default()
}

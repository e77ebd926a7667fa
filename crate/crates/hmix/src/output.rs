//! CSV and JSON emission, content digests and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A CSV table assembled in memory, written in one go.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

/// Shortest round-trip text of a float (`NaN` and `inf` spelled out).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| fmt_f64(x)).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        // writing to a Vec cannot fail
        w.write_record(&self.header).expect("in-memory csv");
        for r in &self.rows {
            w.write_record(r).expect("in-memory csv");
        }
        w.into_inner().expect("in-memory csv")
    }
}

/// Files written by one run, recorded for the manifest.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<OutputFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

impl Outputs {
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        tracing::info!(path = %path.display(), bytes = bytes.len(), "wrote output");
        self.files.push(OutputFile { path: path.display().to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_table(&mut self, path: &Path, table: &Table) -> Result<(), CliError> {
        self.write(path, &table.to_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
        bytes.push(b'\n');
        self.write(path, &bytes)
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }
}

/// Provenance of one run. Everything except `worker_count` is a function of
/// the configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_digest: String,
    pub seed: u64,
    pub worker_count: usize,
    pub tool_version: String,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &serde_json::Value, seed: u64, worker_count: usize, outputs: &Outputs) -> Self {
        // serde_json maps are ordered, so this text is canonical
        let canonical = serde_json::to_vec(config).expect("json value");
        Self {
            subcommand: subcommand.to_string(),
            config_digest: sha256_hex(&canonical),
            seed,
            worker_count,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: outputs.files().to_vec(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest");
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| CliError::io(path, e))
    }
}

/// `dir/stem.<suffix>` next to a primary output: `mix.csv` → `mix.manifest.json`.
pub fn sibling(primary: &Path, suffix: &str) -> PathBuf {
    let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    primary.with_file_name(format!("{stem}.{suffix}"))
}

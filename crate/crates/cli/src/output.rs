//! Run directory layout, report/CSV persistence, the run manifest, and the
//! stdout summary table.
//!
//! Numbers are rendered through serde_json everywhere (files and table), so
//! the summary always shows exactly the persisted values. CSV files use '.'
//! decimals, '\n' line endings, UTF-8.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::CliError;

pub const SPEC_VERSION: &str = "1.0";

/// Formats a float exactly as it appears in the JSON reports.
pub fn fmt_f64(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "null".to_string())
}

/// Accumulates one run's outputs, then writes the manifest last.
pub struct RunWriter {
    pub dir: PathBuf,
    subcommand: String,
    config_json: String,
    seed: u64,
    started_at: String,
    hash: String,
    outputs: Vec<String>,
    summary: Vec<(String, String)>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    spec_version: &'a str,
    subcommand: &'a str,
    seed: u64,
    inputs_hash: &'a str,
    started_at: &'a str,
    finished_at: String,
    outputs: &'a [String],
    config: serde_json::Value,
}

impl RunWriter {
    /// Creates `out_base/<hash12>/` where the hash covers the subcommand,
    /// the canonical config, and any raw input file bytes.
    pub fn create(
        out_base: &Path,
        subcommand: &str,
        config_json: String,
        seed: u64,
        input_files: &[&Path],
    ) -> Result<Self, CliError> {
        let mut hasher = Sha256::new();
        hasher.update(subcommand.as_bytes());
        hasher.update(config_json.as_bytes());
        for path in input_files {
            hasher.update(fs::read(path)?);
        }
        let digest = hasher.finalize();
        let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let dir = out_base.join(&hash[..12]);
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            subcommand: subcommand.to_string(),
            config_json,
            seed,
            started_at: chrono::Utc::now().to_rfc3339(),
            hash,
            outputs: Vec::new(),
            summary: Vec::new(),
        })
    }

    /// Writes the JSON report under a versioned envelope.
    pub fn write_report<T: Serialize>(&mut self, report: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Envelope<'a, T> {
            spec_version: &'a str,
            subcommand: &'a str,
            results: &'a T,
        }
        let env = Envelope { spec_version: SPEC_VERSION, subcommand: &self.subcommand, results: report };
        let text = serde_json::to_string_pretty(&env).expect("report serializes");
        fs::write(self.dir.join("report.json"), text + "\n")?;
        self.outputs.push("report.json".to_string());
        Ok(())
    }

    /// Writes a CSV file; every cell already rendered to a string.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut text = String::new();
        if !header.is_empty() {
            text.push_str(&header.join(","));
            text.push('\n');
        }
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(self.dir.join(name), text)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Queues a row for the stdout summary table.
    pub fn summarize(&mut self, key: &str, value: String) {
        self.summary.push((key.to_string(), value));
    }

    pub fn summarize_f64(&mut self, key: &str, value: f64) {
        self.summarize(key, fmt_f64(value));
    }

    /// Writes the manifest and prints the summary table.
    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        let manifest = Manifest {
            spec_version: SPEC_VERSION,
            subcommand: &self.subcommand,
            seed: self.seed,
            inputs_hash: &self.hash,
            started_at: &self.started_at,
            finished_at: chrono::Utc::now().to_rfc3339(),
            outputs: &self.outputs,
            config: serde_json::from_str(&self.config_json).expect("canonical config parses"),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(self.dir.join("manifest.json"), text + "\n")?;

        let width = self.summary.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        println!("run {}  ({})", &self.hash[..12], self.subcommand);
        self.summary.insert(0, ("output dir".to_string(), self.dir.display().to_string()));
        for (k, v) in &self.summary {
            println!("  {k:<width$}  {v}", width = width.max(10));
        }
        Ok(self.dir)
    }
}

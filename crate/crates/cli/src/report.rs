//! Reports: one JSON document per run plus one CSV file per table.
//!
//! File names are `{command}-{hash}.json` and `{command}-{hash}-{table}.csv`,
//! where the hash is a content hash of the command and the resolved config.
//! Everything except `timings` is a pure function of (command, config).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// One row of the invariant matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantRow {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl InvariantRow {
    /// Passes iff `value ≤ tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        InvariantRow { name: name.into(), value, tolerance, pass: value <= tolerance, detail: detail.into() }
    }

    /// Passes iff `holds`; `value` is recorded as 1 or 0.
    pub fn holds(name: &str, holds: bool, detail: impl Into<String>) -> Self {
        InvariantRow { name: name.into(), value: holds as u8 as f64, tolerance: 1.0, pass: holds, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub results: Vec<serde_json::Value>,
    pub invariants: Vec<InvariantRow>,
    pub notes: Vec<String>,
    pub tables: Vec<String>,
    pub error: Option<ErrorRecord>,
    pub pass: bool,
    /// Wall-clock seconds per phase; the only nondeterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            config_hash: config_hash(command, config),
            config: config.clone(),
            results: Vec::new(),
            invariants: Vec::new(),
            notes: Vec::new(),
            tables: Vec::new(),
            error: None,
            pass: true,
            timings: BTreeMap::new(),
        }
    }

    pub fn push<T: Serialize>(&mut self, value: &T) {
        self.results.push(serde_json::to_value(value).expect("results serialise to JSON"));
    }

    pub fn fail_with(&mut self, kind: &str, message: impl Into<String>) {
        self.error = Some(ErrorRecord { kind: kind.into(), message: message.into() });
        self.pass = false;
    }

    /// Recomputes `pass` from the invariant rows (and keeps it false after an error).
    pub fn settle(&mut self, flags: &[bool]) {
        self.pass = self.error.is_none() && self.invariants.iter().all(|r| r.pass) && flags.iter().all(|&f| f);
    }
}

/// First 16 hex digits of SHA-256 over the command and the canonical JSON of
/// the config. The output directory is left out: moving results elsewhere
/// should not rename them.
pub fn config_hash(command: &str, config: &RunConfig) -> String {
    let canonical = RunConfig { output_dir: Default::default(), ..config.clone() };
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_vec(&canonical).expect("config serialises to JSON"));
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// A CSV table; cells are already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len(), "table {}", self.name);
        self.rows.push(cells);
    }
}

/// Shortest round-trip formatting; `.` decimal point regardless of locale,
/// and no `-0`.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

pub fn file_stem(report: &Report) -> String {
    format!("{}-{}", report.command, report.config_hash)
}

/// Writes the tables, records their file names in the report, then writes the JSON.
pub fn write_report(report: &mut Report, tables: &[Table], dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = file_stem(report);
    let mut paths = Vec::new();
    report.tables.clear();
    for t in tables {
        let name = format!("{stem}-{}.csv", t.name);
        let path = dir.join(&name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        report.tables.push(name);
        paths.push(path);
    }
    let path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    paths.insert(0, path);
    Ok(paths)
}

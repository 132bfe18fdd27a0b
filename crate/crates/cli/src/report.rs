//! Report files: one CSV per table, `report.json` with verdicts and the
//! config echo, `timing.json` with wall times. Everything except the
//! timing file is a pure function of config and seed.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use lbe_core::LemmaVerdict;
use serde::Serialize;

/// A numeric table; `None` cells are written empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_values(&mut self, row: &[f64]) {
        self.push(row.iter().copied().map(Some).collect());
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| c.map(format_number).unwrap_or_default())
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Decimal-dot number text; scientific below `1e−3` in magnitude and for
/// very large values, shortest round-trip digits otherwise.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".into()
    } else if !x.is_finite() {
        format!("{x}")
    } else if a < 1e-3 || a >= 1e15 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Resolved configuration, re-parseable TOML.
    pub config: String,
    pub tables: Vec<Table>,
    /// Scalar results such as fitted exponents, keyed by name.
    pub summary: BTreeMap<String, f64>,
    pub verdicts: Vec<LemmaVerdict>,
    /// Why the run counts as failed, if it does.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip)]
    pub timing: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(command: &str, config: String) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            tables: Vec::new(),
            summary: BTreeMap::new(),
            verdicts: Vec::new(),
            failure: None,
            timing: BTreeMap::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.verdicts.iter().all(|v| v.pass)
    }

    pub fn failed_verdicts(&self) -> Vec<&LemmaVerdict> {
        self.verdicts.iter().filter(|v| !v.pass).collect()
    }
}

#[derive(Serialize)]
struct FailureRecord<'a> {
    command: &'a str,
    reason: String,
    failed: Vec<&'a LemmaVerdict>,
}

/// Writes `path` atomically: temporary file in the same directory, then
/// rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn json(value: &impl Serialize) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("report values serialize");
    text.push('\n');
    text.into_bytes()
}

/// Writes every file of `report` into `dir` and returns their paths.
///
/// `failure.json` is written only for failed runs; a stale one from an
/// earlier run in the same directory is removed.
pub fn emit_report(report: &Report, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> io::Result<()> {
        let path = dir.join(name);
        write_atomic(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    for t in &report.tables {
        put(&t.file_name(), t.to_csv().as_bytes())?;
    }
    put("config.toml", report.config.as_bytes())?;
    put("report.json", &json(report))?;
    put("timing.json", &json(&report.timing))?;
    let failure_path = dir.join("failure.json");
    if report.passed() {
        if failure_path.exists() {
            fs::remove_file(&failure_path)?;
        }
    } else {
        let record = FailureRecord {
            command: &report.command,
            reason: report
                .failure
                .clone()
                .unwrap_or_else(|| "one or more verdicts failed".into()),
            failed: report.failed_verdicts(),
        };
        put("failure.json", &json(&record))?;
    }
    Ok(written)
}

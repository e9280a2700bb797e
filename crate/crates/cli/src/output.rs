//! Deterministic artifact writers: CSV tables with JSON sidecars, a report
//! and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};

use crate::config::SCHEMA_VERSION;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    /// Floats use 17 significant digits so that they round-trip. Negative
    /// zero prints as zero.
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if v.is_nan() => "NaN".into(),
            Cell::Float(v) if v.is_infinite() => if *v > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Float(v) => format!("{:.16e}", v + 0.0),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra keys for the sidecar.
    pub meta: Map<String, Value>,
}

impl Table {
    pub fn new(name: &str, columns: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Table { name: name.into(), columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new(), meta: Map::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn with_meta(mut self, key: &str, value: Value) -> Self {
        self.meta.insert(key.into(), value);
        self
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    fn write(&self, dir: &Path, command: &str) -> Result<Vec<String>> {
        let csv_path = dir.join(self.file_name());
        let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        let mut meta = Map::new();
        meta.insert("schemaVersion".into(), json!(SCHEMA_VERSION));
        meta.insert("command".into(), json!(command));
        meta.insert("columns".into(), json!(self.columns));
        meta.insert("rows".into(), json!(self.rows.len()));
        meta.extend(self.meta.clone());
        let meta_name = format!("{}.meta.json", self.name);
        write_json(&dir.join(&meta_name), &Value::Object(meta))?;
        Ok(vec![self.file_name(), meta_name])
    }
}

/// Everything a command produces.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    /// Command-specific results, written to `report.json`.
    pub report: Map<String, Value>,
    /// Headline numbers copied into the manifest.
    pub summary: Map<String, Value>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn summarize(&mut self, key: &str, value: impl serde::Serialize) {
        let v = serde_json::to_value(value).expect("summary value serializes");
        self.summary.insert(key.into(), v.clone());
        self.report.insert(key.into(), v);
    }

    pub fn report(&mut self, key: &str, value: impl serde::Serialize) {
        self.report.insert(key.into(), serde_json::to_value(value).expect("report value serializes"));
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }
}

pub struct RunInfo<'a> {
    pub command: &'a str,
    pub config: Value,
    pub workers: usize,
    pub wall_seconds: f64,
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes the tables, `report.json` and `manifest.json`. Only the manifest
/// depends on timing or the worker count.
pub fn write_outcome(dir: &Path, outcome: &Outcome, info: &RunInfo) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut outputs = Vec::new();
    for table in &outcome.tables {
        outputs.extend(table.write(dir, info.command)?);
    }
    let mut report = Map::new();
    report.insert("schemaVersion".into(), json!(SCHEMA_VERSION));
    report.insert("command".into(), json!(info.command));
    report.insert("warnings".into(), json!(outcome.warnings));
    report.extend(outcome.report.clone());
    write_json(&dir.join("report.json"), &Value::Object(report))?;
    outputs.push("report.json".into());
    let manifest = json!({
        "tool": "pslab",
        "version": env!("CARGO_PKG_VERSION"),
        "coreVersion": pslab_core::VERSION,
        "schemaVersion": SCHEMA_VERSION,
        "command": info.command,
        "config": info.config,
        "workers": info.workers,
        "wallTimeSeconds": info.wall_seconds,
        "warnings": outcome.warnings,
        "outputs": outputs,
        "summary": outcome.summary,
    });
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Machine-readable failure record.
pub fn write_error(dir: &Path, code: &str, path: Option<&str>, message: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut record = json!({ "error": code, "message": message });
    if let Some(p) = path {
        record["path"] = json!(p);
    }
    write_json(&dir.join("error.json"), &record)
}

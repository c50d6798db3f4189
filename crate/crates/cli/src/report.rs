//! `report.json` (flat dotted keys) and `fields.csv`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use schouten_core::{Field, Grid};

use crate::config::RunConfig;
use crate::CliError;

/// Flat `key → value` map; keys are dotted paths, values never objects.
/// Non-finite numbers become `null`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: BTreeMap<String, Value>,
}

fn flatten_into(prefix: &str, v: Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten_into(&format!("{prefix}.{k}"), v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other);
        }
    }
}

impl Report {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let mut r = Report::default();
        r.set("run.command", command);
        r.set("run.version", env!("CARGO_PKG_VERSION"));
        r.embed("config", cfg);
        r
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.entries.insert(key.into(), value.into());
    }

    /// Serializes `value` and stores its leaves under `prefix`.
    pub fn embed(&mut self, prefix: &str, value: &impl Serialize) {
        let v = serde_json::to_value(value).expect("config types serialize");
        flatten_into(prefix, v, &mut self.entries);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn entries(&self) -> &BTreeMap<String, Value> {
        &self.entries
    }

    pub fn status(&self) -> &str {
        self.entries.get("run.status").and_then(Value::as_str).unwrap_or("unknown")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("values serialize")
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// Per-node columns of `fields.csv`.
pub struct FieldColumns<'a> {
    pub grid: &'a Grid,
    pub u: &'a Field,
    pub ul: &'a Field,
    pub ubar: Option<&'a Field>,
    pub min_eig: &'a Field,
    pub residual: &'a Field,
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        String::new()
    }
}

pub fn write_fields(path: &Path, cols: &FieldColumns<'_>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let io = |e: csv::Error| CliError::Io(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let n = cols.grid.dim();
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend(["u", "ul", "ubar", "min_eig", "residual"].map(String::from));
    w.write_record(&header).map_err(io)?;
    let mut row = Vec::with_capacity(n + 5);
    for p in 0..cols.grid.len() {
        row.clear();
        row.extend(cols.grid.point(p).into_iter().map(cell));
        row.push(cell(cols.u.at(p)));
        row.push(cell(cols.ul.at(p)));
        row.push(cols.ubar.map_or(String::new(), |b| cell(b.at(p))));
        row.push(cell(cols.min_eig.at(p)));
        row.push(cell(cols.residual.at(p)));
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

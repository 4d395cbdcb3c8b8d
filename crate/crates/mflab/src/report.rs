//! Report writers: RFC-4180 CSV tables with 17-significant-digit floats and a
//! machine-readable summary.json of predictions, estimates, tolerances and
//! verdicts.

use crate::{Error, Result};
use serde::Serialize;
use serde_json::{Map, Value};
use std::path::Path;

/// Format a float with 17 significant digits so a rerun is byte-identical and
/// the value round-trips exactly through text.
pub fn fmt_float(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Write a CSV table (header mandatory, UTF-8, '.' decimal separator).
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)
        .map_err(|e| Error::input("report", "write_csv", format!("{}: {e}", path.display())))?;
    w.write_record(header)
        .map_err(|e| Error::input("report", "write_csv", e.to_string()))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::input(
                "report",
                "write_csv",
                format!("row width {} does not match header width {}", row.len(), header.len()),
            ));
        }
        w.write_record(row)
            .map_err(|e| Error::input("report", "write_csv", e.to_string()))?;
    }
    w.flush().map_err(|e| Error::input("report", "write_csv", e.to_string()))?;
    Ok(())
}

/// One acceptance rule: an estimated quantity, the bound it must satisfy, and
/// the verdict.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable statement of the tolerance or band.
    pub rule: String,
    pub pass: bool,
}

impl Check {
    pub fn band(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            value,
            rule: format!("in [{lo}, {hi}]"),
            pass: value.is_finite() && value >= lo && value <= hi,
        }
    }

    pub fn upper(name: &str, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            rule: format!("<= {bound}"),
            pass: value.is_finite() && value <= bound,
        }
    }

    pub fn is_true(name: &str, ok: bool) -> Self {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            rule: "== true".into(),
            pass: ok,
        }
    }
}

/// Accumulates the summary document for a run.
#[derive(Debug, Default)]
pub struct Summary {
    fields: Map<String, Value>,
    checks: Vec<Check>,
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.fields.insert(
            key.to_string(),
            serde_json::to_value(value).expect("summary value serializes"),
        );
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write(&self, path: &Path, schema: &str, command: &str, seed: u64) -> Result<bool> {
        let mut doc = Map::new();
        doc.insert("schema".into(), Value::String(schema.to_string()));
        doc.insert("command".into(), Value::String(command.to_string()));
        doc.insert("seed".into(), serde_json::to_value(seed).unwrap());
        for (k, v) in &self.fields {
            doc.insert(k.clone(), v.clone());
        }
        doc.insert("checks".into(), serde_json::to_value(&self.checks).unwrap());
        let pass = self.all_pass();
        doc.insert("all_pass".into(), Value::Bool(pass));
        let text = serde_json::to_string_pretty(&Value::Object(doc))
            .expect("summary serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| Error::input("report", "write_summary", format!("{}: {e}", path.display())))?;
        Ok(pass)
    }
}

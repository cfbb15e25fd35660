//! Rendering of command results as a JSON document or a CSV table.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde_json::{Map, Value};

use crate::config::Format;
use crate::CliError;

pub const SCHEMA_VERSION: u64 = 1;

/// Result of a command: summary fields, one object per table row, and the verdict.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: Map<String, Value>,
    pub rows: Vec<Map<String, Value>>,
    pub pass: bool,
}

impl Outcome {
    pub fn new(pass: bool) -> Self {
        Outcome { pass, ..Default::default() }
    }

    pub fn summary(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.summary.insert(key.to_string(), v.into());
        self
    }
}

/// Builds rows with a fixed column order.
#[derive(Default)]
pub struct Row(Map<String, Value>);

impl Row {
    pub fn set(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.0.insert(key.to_string(), v.into());
        self
    }

    /// Adds `prefix_0, prefix_1, ...` from a coordinate slice.
    pub fn coords(mut self, prefix: &str, c: &[f64]) -> Self {
        for (i, v) in c.iter().enumerate() {
            self.0.insert(format!("{prefix}_{i}"), json_f64(*v));
        }
        self
    }

    pub fn build(self) -> Map<String, Value> {
        self.0
    }
}

/// Non-finite values become `null`.
pub fn json_f64(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

pub fn opt_f64(v: Option<f64>) -> Value {
    v.map_or(Value::Null, json_f64)
}

pub fn render(command: &str, config: Value, outcome: &Outcome, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => {
            let mut doc = Map::new();
            doc.insert("schema".into(), SCHEMA_VERSION.into());
            doc.insert("command".into(), command.into());
            doc.insert("config".into(), config);
            doc.insert("pass".into(), outcome.pass.into());
            for (k, v) in &outcome.summary {
                doc.insert(k.clone(), v.clone());
            }
            doc.insert("rows".into(), Value::Array(outcome.rows.iter().cloned().map(Value::Object).collect()));
            let mut s = serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| CliError::Usage(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => csv_table(&outcome.rows),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Columns are the union of row keys in first-seen order.
fn csv_table(rows: &[Map<String, Value>]) -> Result<String, CliError> {
    let mut cols: Vec<&String> = Vec::new();
    for r in rows {
        for k in r.keys() {
            if !cols.contains(&k) {
                cols.push(k);
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| CliError::Io(io::Error::other(e));
    w.write_record(&cols).map_err(io_err)?;
    for r in rows {
        w.write_record(cols.iter().map(|c| r.get(*c).map(cell).unwrap_or_default())).map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(io::Error::other(e)))
}

pub fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(CliError::Io),
        None => io::stdout().lock().write_all(text.as_bytes()).map_err(CliError::Io),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_share_values() {
        let mut o = Outcome::new(true);
        o.rows.push(Row::default().set("a", 0.1).set("b", "x,y").build());
        o.rows.push(Row::default().set("a", json_f64(f64::NAN)).set("c", true).build());
        let csv = render("t", Value::Null, &o, Format::Csv).unwrap();
        assert_eq!(csv, "a,b,c\n0.1,\"x,y\",\n,,true\n");
        let json: Value = serde_json::from_str(&render("t", Value::Null, &o, Format::Json).unwrap()).unwrap();
        assert_eq!(json["schema"], 1);
        assert_eq!(json["rows"][0]["a"], 0.1);
        assert!(json["rows"][1]["a"].is_null());
    }

    #[test]
    fn coordinate_columns() {
        let r = Row::default().coords("z", &[1.0, 2.0]).build();
        assert_eq!(r.keys().collect::<Vec<_>>(), vec!["z_0", "z_1"]);
    }
}

//! Experiment reports and their on-disk layout.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

use subrosa::io::{export_csv, write_field, write_flow, FieldData};
use subrosa::FlowMap;

use crate::config::Kind;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable bound, e.g. `<= 1e-8`.
    pub bound: String,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub kind: Kind,
    pub metrics: Map<String, Value>,
    pub checks: Vec<Check>,
    pub timings: Map<String, Value>,
    pub tables: Vec<Table>,
    /// Written as `<name>.srfld` and `<name>.csv`.
    pub fields: Vec<(String, Vec<String>, FieldData)>,
    pub flow: Option<FlowMap>,
}

impl Report {
    pub fn new(kind: Kind) -> Self {
        Self {
            kind,
            metrics: Map::new(),
            checks: Vec::new(),
            timings: Map::new(),
            tables: Vec::new(),
            fields: Vec::new(),
            flow: None,
        }
    }

    pub fn metric(&mut self, name: &str, value: impl Into<Value>) {
        self.metrics.insert(name.to_string(), value.into());
    }

    /// Non-finite floats have no JSON form; they are stored as strings.
    pub fn metric_f64(&mut self, name: &str, value: f64) {
        let v = if value.is_finite() {
            json!(value)
        } else {
            json!(value.to_string())
        };
        self.metrics.insert(name.to_string(), v);
    }

    pub fn at_most(&mut self, name: &str, value: f64, bound: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            bound: format!("<= {bound:e}"),
            pass: value <= bound,
        });
    }

    pub fn at_least(&mut self, name: &str, value: f64, bound: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            bound: format!(">= {bound}"),
            pass: value >= bound,
        });
    }

    pub fn within(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            bound: format!("in [{lo}, {hi}]"),
            pass: value >= lo && value <= hi,
        });
    }

    pub fn holds(&mut self, name: &str, ok: bool) {
        self.checks.push(Check {
            name: name.to_string(),
            value: if ok { 1.0 } else { 0.0 },
            bound: "true".into(),
            pass: ok,
        });
    }

    pub fn timing(&mut self, name: &str, seconds: f64) {
        self.timings.insert(name.to_string(), json!(seconds));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn summary(&self, config: &Value, runtime: &Value) -> Value {
        json!({
            "kind": self.kind.name(),
            "pass": self.passed(),
            "metrics": self.metrics,
            "checks": self.checks.iter().map(|c| json!({
                "name": c.name,
                "value": if c.value.is_finite() { json!(c.value) } else { json!(c.value.to_string()) },
                "bound": c.bound,
                "pass": c.pass,
            })).collect::<Vec<_>>(),
            "timings": self.timings,
            "config": config,
            "runtime": runtime,
        })
    }

    /// Writes tables, fields and the JSON summary into `dir`.
    pub fn write(&self, dir: &Path, config: &Value, runtime: &Value) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| out_err(dir, e))?;
        write_json(&dir.join("config.json"), config)?;
        for t in &self.tables {
            write_table(&dir.join(format!("{}.csv", t.name)), t)?;
        }
        for (name, columns, data) in &self.fields {
            let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
            write_field(dir.join(format!("{name}.srfld")), data).map_err(|e| out_err(dir, e))?;
            export_csv(dir.join(format!("{name}.csv")), data, &cols).map_err(|e| out_err(dir, e))?;
        }
        write_json(&dir.join("report.json"), &self.summary(config, runtime))
    }

    pub fn dump_flow(&self, path: &Path) -> Result<(), CliError> {
        match &self.flow {
            Some(flow) => write_flow(path, flow).map_err(|e| out_err(path, e)),
            None => Err(CliError::Output(format!("no flow map to write to {}", path.display()))),
        }
    }
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| out_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| out_err(path, e))
}

fn write_table(path: &Path, t: &Table) -> Result<(), CliError> {
    let mut out = Vec::new();
    writeln!(out, "{}", t.header.join(",")).map_err(|e| out_err(path, e))?;
    for row in &t.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", cells.join(",")).map_err(|e| out_err(path, e))?;
    }
    fs::write(path, out).map_err(|e| out_err(path, e))
}

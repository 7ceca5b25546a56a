//! CSV/JSON emission with reproducibility headers.
//!
//! Every file starts with the full resolved configuration: CSV as `# key=value`
//! comment lines, JSON as a `config` object.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{Map, Value};

/// Output format of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Resolved configuration for the reproducibility header, in insertion order.
#[derive(Debug, Default)]
pub struct ConfigHeader {
    entries: Vec<(String, String)>,
}

impl ConfigHeader {
    pub fn new(command: &str) -> Self {
        let mut h = ConfigHeader::default();
        h.push("command", command);
        h
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// `# key=value` lines for CSV files.
    pub fn csv_comments(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out
    }

    /// The `config` object for JSON files.
    pub fn json_object(&self) -> Value {
        let mut map = Map::new();
        for (k, v) in &self.entries {
            map.insert(k.clone(), Value::String(v.clone()));
        }
        Value::Object(map)
    }
}

/// A CSV table: column names plus rows of already-formatted cells.
pub struct CsvTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn render(&self, header: &ConfigHeader) -> String {
        let mut out = header.csv_comments();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            debug_assert_eq!(row.len(), self.columns.len());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Wraps a JSON payload with its reproducibility config.
pub fn json_document(header: &ConfigHeader, key: &str, payload: Value) -> Value {
    let mut map = Map::new();
    map.insert("config".into(), header.json_object());
    map.insert(key.into(), payload);
    Value::Object(map)
}

/// Writes to the path, or to stdout when no path is given.
pub fn write_text(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .with_context(|| format!("creating directory {}", dir.display()))?;
            }
            fs::write(path, content).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes()).context("writing stdout")
        }
    }
}

/// Renders a JSON value with a trailing newline.
pub fn render_json(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

/// Formats a float compactly but losslessly enough for plotting (15
/// significant digits).
pub fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        let s = format!("{v:.15e}");
        // Prefer plain notation when it round-trips short.
        let plain = format!("{v}");
        if plain.len() <= s.len() {
            plain
        } else {
            s
        }
    }
}

/// Describes the scenario file within headers.
pub fn describe_spec(path: &Path, spec: &cogsim_core::ErasureSpec) -> Vec<(String, String)> {
    vec![
        ("spec".into(), path.display().to_string()),
        (
            "tx1_patterns".into(),
            format!("{:?}", spec.tx1_patterns()),
        ),
        (
            "tx2_patterns".into(),
            format!("{:?}", spec.tx2_patterns()),
        ),
    ]
}

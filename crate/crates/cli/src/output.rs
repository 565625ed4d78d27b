//! Artifact collection and the run manifest.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

/// Outcome of one suite-internal check.
#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Files and results of a suite, held in memory until the suite finishes.
#[derive(Debug, Default)]
pub struct SuiteOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: serde_json::Map<String, Value>,
    pub assertions: Vec<Assertion>,
    pub warnings: Vec<String>,
}

impl SuiteOutput {
    pub fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn csv(&mut self, name: &str, table: Csv) {
        self.file(name, table.text.into_bytes());
    }

    pub fn json(&mut self, name: &str, value: &Value) {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        self.file(name, text.into_bytes());
    }

    pub fn record(&mut self, key: &str, value: Value) {
        self.summary.insert(key.to_string(), value);
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.to_string(), passed, detail: detail.into() });
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let m = message.into();
        if !self.warnings.contains(&m) {
            self.warnings.push(m);
        }
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

/// CSV text with a header row; numbers use the shortest round-trip form.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")), columns: header.len() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.columns, "csv row width");
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        let _ = writeln!(self.text, "{}", line.join(","));
    }
}

pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) if v.is_infinite() => if *v > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::F(v) if *v == 0.0 || (1e-4..1e15).contains(&v.abs()) => format!("{v}"),
            Cell::F(v) => format!("{v:e}"),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// Converts a serializable value to JSON, writing non-finite floats as strings.
pub fn to_json<T: serde::Serialize>(value: &T) -> Value {
    fn convert(v: toml::Value) -> Value {
        match v {
            toml::Value::String(s) => Value::String(s),
            toml::Value::Integer(i) => json!(i),
            toml::Value::Float(f) if f.is_finite() => json!(f),
            toml::Value::Float(f) => Value::String(if f.is_nan() {
                "nan".into()
            } else if f > 0.0 {
                "inf".into()
            } else {
                "-inf".into()
            }),
            toml::Value::Boolean(b) => Value::Bool(b),
            toml::Value::Datetime(d) => Value::String(d.to_string()),
            toml::Value::Array(a) => Value::Array(a.into_iter().map(convert).collect()),
            toml::Value::Table(t) => Value::Object(t.into_iter().map(|(k, v)| (k, convert(v))).collect()),
        }
    }
    convert(toml::Value::try_from(value).expect("configuration serializes to toml"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fails when `dir` holds files other than `expected` and the manifest.
pub fn check_output_dir(dir: &Path, expected: &[&str]) -> Result<(), String> {
    if !dir.exists() {
        return Ok(());
    }
    if !dir.is_dir() {
        return Err(format!("output path {} is not a directory", dir.display()));
    }
    let entries = std::fs::read_dir(dir).map_err(|e| format!("cannot list {}: {e}", dir.display()))?;
    for entry in entries {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name != MANIFEST && !expected.contains(&name.as_str()) {
            return Err(format!(
                "output directory {} holds '{name}', which this run would not list in its manifest",
                dir.display()
            ));
        }
    }
    Ok(())
}

/// Writes every artifact and the manifest. Stale artifacts of the same suite
/// that this run did not produce are removed first.
pub fn write_run(dir: &Path, expected: &[&str], header: Value, out: &SuiteOutput) -> std::io::Result<Value> {
    std::fs::create_dir_all(dir)?;
    for name in expected {
        let path = dir.join(name);
        if path.exists() && !out.files.iter().any(|(n, _)| n == name) {
            std::fs::remove_file(path)?;
        }
    }
    let mut files = Vec::new();
    let mut sorted: Vec<&(String, Vec<u8>)> = out.files.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for (name, bytes) in sorted {
        std::fs::write(dir.join(name), bytes)?;
        files.push(json!({ "name": name, "bytes": bytes.len(), "sha256": sha256_hex(bytes) }));
    }
    let assertions: Vec<Value> =
        out.assertions.iter().map(|a| json!({ "name": a.name, "passed": a.passed, "detail": a.detail })).collect();
    let mut manifest = header;
    let obj = manifest.as_object_mut().expect("manifest header is an object");
    obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
    obj.insert("files".into(), Value::Array(files));
    obj.insert("summary".into(), Value::Object(out.summary.clone()));
    obj.insert("assertions".into(), Value::Array(assertions));
    obj.insert("warnings".into(), json!(out.warnings));
    obj.insert("passed".into(), json!(out.passed()));
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(dir.join(MANIFEST), text)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rendering() {
        let mut c = Csv::new(&["a", "b", "c"]);
        c.row(&[Cell::F(0.1), Cell::F(f64::INFINITY), Cell::Empty]);
        c.row(&[Cell::I(-3), Cell::S("x".into()), Cell::F(1e-12)]);
        assert_eq!(c.text, "a,b,c\n0.1,inf,\n-3,x,1e-12\n");
    }

    #[test]
    fn non_finite_floats_become_strings() {
        #[derive(serde::Serialize)]
        struct S {
            v: Vec<f64>,
        }
        assert_eq!(to_json(&S { v: vec![1.0, f64::INFINITY] }), json!({ "v": [1.0, "inf"] }));
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}

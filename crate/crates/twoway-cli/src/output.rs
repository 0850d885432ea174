//! Deterministic CSV/JSON emitters. Every file starts with a comment header
//! carrying the column names (with units) and the configuration hash, and
//! numbers are serialized with 17 significant digits so reruns are
//! byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvWriter {
    buf: String,
}

impl CsvWriter {
    pub fn new(config_hash: &str, columns: &str) -> Self {
        let mut buf = String::new();
        buf.push_str(&format!("# config_hash={config_hash}\n"));
        buf.push_str(&format!("# columns: {columns}\n"));
        CsvWriter { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write(self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(self.buf.as_bytes())
    }
}

pub fn write_json(
    path: &Path,
    config_hash: &str,
    value: &serde_json::Value,
) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut wrapped = serde_json::Map::new();
    wrapped.insert(
        "config_hash".to_string(),
        serde_json::Value::String(config_hash.to_string()),
    );
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            wrapped.insert(k.clone(), v.clone());
        }
    } else {
        wrapped.insert("value".to_string(), value.clone());
    }
    let body = serde_json::to_string_pretty(&serde_json::Value::Object(wrapped))?;
    fs::write(path, body + "\n")
}

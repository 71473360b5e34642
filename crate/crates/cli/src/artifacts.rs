//! Output files: atomic writes, CSV with a metadata preamble, run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// CSV table whose first lines are `# key: value` metadata.
pub struct Table {
    meta: Vec<(String, String)>,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { meta: Vec::new(), writer }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn row(&mut self, fields: &[String]) {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        let mut out = Vec::new();
        for (k, v) in &self.meta {
            out.extend_from_slice(format!("# {k}: {v}\n").as_bytes());
        }
        out.extend(self.writer.into_inner().expect("in-memory flush"));
        out
    }

    pub fn write(self, path: &Path) -> CliResult<()> {
        write_atomic(path, &self.into_bytes())
    }
}

/// Shortest round-trip text of a float, in exponent form when very small or large.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn cells<I: IntoIterator<Item = f64>>(values: I) -> Vec<String> {
    values.into_iter().map(num).collect()
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    /// `value <= limit`.
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }

    pub fn holds(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            value: if passed { 1.0 } else { 0.0 },
            limit: 1.0,
            passed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub kind: String,
    pub tool: String,
    pub tool_version: String,
    pub model_hash: Option<String>,
    pub seed: Option<u64>,
    pub wall_time_seconds: f64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub artifacts: Vec<PathBuf>,
    pub spec: serde_json::Value,
}

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use gbdt::{CMat, GbdtError, ResidualReport};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

impl ErrorInfo {
    pub fn from_gbdt(e: &GbdtError) -> Self {
        let debug = format!("{e:?}");
        let kind = debug.split(|ch: char| !ch.is_alphanumeric()).next().unwrap_or("").to_string();
        Self { kind, message: e.to_string() }
    }
}

/// Everything a run reports. Field order and contents depend only on the
/// input, so identical runs give identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub pass: bool,
    pub tolerance_scale: f64,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: Vec<ResidualReport>,
    pub error: Option<ErrorInfo>,
    pub outputs: Vec<String>,
}

impl Report {
    pub fn new(command: &str, tolerance_scale: f64) -> Self {
        Self {
            command: command.into(),
            pass: true,
            tolerance_scale,
            tolerances: BTreeMap::new(),
            checks: Vec::new(),
            error: None,
            outputs: Vec::new(),
        }
    }

    /// Records an effective tolerance and returns it.
    pub fn tolerance(&mut self, key: &str, base: f64) -> f64 {
        let tol = base * self.tolerance_scale;
        self.tolerances.insert(key.into(), tol);
        tol
    }

    pub fn push(&mut self, check: ResidualReport) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    pub fn fail_with(&mut self, e: &GbdtError) {
        self.pass = false;
        self.error = Some(ErrorInfo::from_gbdt(e));
    }
}

/// A file produced by a command, written under `--out`.
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

pub fn write_all(dir: &Path, report: &mut Report, artifacts: &[Artifact]) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
        report.outputs.push(a.name.clone());
    }
    let report_name = format!("{}_report.json", report.command.replace('-', "_"));
    report.outputs.push(report_name.clone());
    let path = dir.join(report_name);
    let text = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

/// Header entries `{prefix}{row}{col}_re`, `{prefix}{row}{col}_im` in row-major order.
pub fn matrix_header(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(2 * rows * cols);
    for i in 1..=rows {
        for k in 1..=cols {
            out.push(format!("{prefix}{i}{k}_re"));
            out.push(format!("{prefix}{i}{k}_im"));
        }
    }
    out
}

pub fn matrix_fields(m: &CMat) -> Vec<String> {
    let mut out = Vec::with_capacity(2 * m.len());
    for i in 0..m.nrows() {
        for k in 0..m.ncols() {
            out.push(m[(i, k)].re.to_string());
            out.push(m[(i, k)].im.to_string());
        }
    }
    out
}

pub fn csv_table(header: &[String], rows: &[Vec<String>]) -> io::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    String::from_utf8(bytes).map_err(io::Error::other)
}

//! Atomic file output: JSON reports and RFC-4180 CSV tables.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use semieff::{Error, Result};

/// Writes `bytes` to `dir/name` through a temporary file and a rename, so a
/// reader never sees a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let io = |e: std::io::Error| Error::Config(format!("cannot write {}: {e}", target.display()));
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    std::fs::rename(&tmp, &target).map_err(io)?;
    Ok(target)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// A CSV table held in memory until it is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Row-major `i,j,value` dump of a matrix given as rows, 1-based.
    pub fn matrix(name: impl Into<String>, rows: &[Vec<f64>]) -> Self {
        let mut t = Table::new(name, &["i", "j", "value"]);
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                t.push(vec![(i + 1).to_string(), (j + 1).to_string(), fmt_f64(*v)]);
            }
        }
        t
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        let err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))
    }
}

/// A named check whose failure makes the run exit with status 2.
#[derive(Debug, Clone, Serialize)]
pub struct Invariant {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Invariant {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Invariant { name: name.into(), passed: value <= threshold, value, threshold }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Invariant { name: name.into(), passed: value >= threshold, value, threshold }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Invariant { name: name.into(), passed: ok, value: if ok { 1.0 } else { 0.0 }, threshold: 1.0 }
    }
}

/// Everything a subcommand produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub result: Value,
    pub tables: Vec<Table>,
    pub invariants: Vec<Invariant>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.invariants.iter().all(|i| i.passed)
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Numerical(format!("cannot serialise report: {e}")))
}

/// The report document. Everything except `metadata` depends only on the
/// configuration.
pub fn report_document(command: &str, config: &Value, outcome: &Outcome) -> Value {
    let generated = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!({
        "command": command,
        "config": config,
        "passed": outcome.passed(),
        "invariants": outcome.invariants,
        "result": outcome.result,
        "metadata": {
            "version": env!("CARGO_PKG_VERSION"),
            "generated_unix": generated,
            "threads": rayon::current_num_threads(),
        },
    })
}

pub fn pretty(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("values serialise");
    out.push(b'\n');
    out
}

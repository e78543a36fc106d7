//! CSV series files and JSON sidecars.
//!
//! Floats are written with Rust's shortest round-trip formatting, so files
//! are lossless and byte-stable across runs.

use qca_core::observables::ObservableRecord;
use qca_core::series::StepStats;
use serde::Serialize;
use std::fs::File;
use std::path::{Path, PathBuf};

pub const BASE_COLUMNS: [&str; 8] = ["t", "gamma", "gamma_cl", "c2", "s2", "s2_cl", "max_bond", "discarded_weight"];
/// Last line of a CSV whose run stopped early.
pub const FAILURE_MARKER: &str = "# FAILED";

pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".to_string()
    } else if (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn csv_path(stem: &Path) -> PathBuf {
    with_suffix(stem, "csv")
}

pub fn json_path(stem: &Path) -> PathBuf {
    with_suffix(stem, "json")
}

fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// One CSV row before formatting. Missing values print as empty fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Row {
    pub t: usize,
    pub gamma: Option<f64>,
    pub gamma_cl: Option<f64>,
    pub c2: Option<f64>,
    pub s2: Option<f64>,
    pub s2_cl: Option<f64>,
    pub max_bond: Option<usize>,
    pub discarded_weight: Option<f64>,
    pub densities: Vec<f64>,
    pub extra: Vec<f64>,
}

impl Row {
    pub fn from_record(r: &ObservableRecord, s: &StepStats) -> Self {
        Self {
            t: r.t,
            gamma: Some(r.gamma),
            gamma_cl: Some(r.gamma_cl),
            c2: Some(r.c2),
            s2: Some(r.s2),
            s2_cl: Some(r.s2_cl),
            max_bond: Some(s.max_bond),
            discarded_weight: Some(s.discarded_weight),
            densities: r.densities.clone(),
            extra: Vec::new(),
        }
    }
}

pub struct SeriesWriter {
    out: csv::Writer<File>,
    path: PathBuf,
    density_columns: usize,
    extra_columns: usize,
}

impl SeriesWriter {
    pub fn create(path: &Path, density_columns: usize, extra_header: &[String]) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut out = csv::WriterBuilder::new().flexible(true).from_path(path)?;
        let mut header: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend((0..density_columns).map(|k| format!("n{k}")));
        header.extend(extra_header.iter().cloned());
        out.write_record(&header)?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
            density_columns,
            extra_columns: extra_header.len(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes and flushes one row so partial output survives a failure.
    pub fn write(&mut self, row: &Row) -> std::io::Result<()> {
        let mut fields = vec![
            row.t.to_string(),
            fmt_opt(row.gamma),
            fmt_opt(row.gamma_cl),
            fmt_opt(row.c2),
            fmt_opt(row.s2),
            fmt_opt(row.s2_cl),
            row.max_bond.map(|b| b.to_string()).unwrap_or_default(),
            fmt_opt(row.discarded_weight),
        ];
        for k in 0..self.density_columns {
            fields.push(fmt_opt(row.densities.get(k).copied()));
        }
        for k in 0..self.extra_columns {
            fields.push(fmt_opt(row.extra.get(k).copied()));
        }
        self.out.write_record(&fields)?;
        self.out.flush()
    }

    pub fn fail(&mut self, t: usize, msg: &str) -> std::io::Result<()> {
        // one unquoted field, so the line reads as a `#` comment
        let line = format!("{FAILURE_MARKER} at t={t}: {}", msg.replace(['\n', '\r', ',', '"'], " "));
        self.out.write_record([line])?;
        self.out.flush()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    #[serde(rename = "qca-core")]
    pub core: &'static str,
    #[serde(rename = "qca-cli")]
    pub cli: &'static str,
}

pub fn versions() -> Versions {
    Versions {
        core: qca_core::VERSION,
        cli: env!("CARGO_PKG_VERSION"),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

/// A parsed series CSV; empty fields become `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub failed: bool,
}

impl SeriesTable {
    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let failed = text.lines().any(|l| l.starts_with(FAILURE_MARKER));
        let invalid = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidData, m);
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| invalid(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() {
            return Err(invalid("empty series file".into()));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| invalid(e.to_string()))?;
            let row = rec
                .iter()
                .map(|f| {
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<f64>().map(Some).map_err(|e| invalid(format!("bad field `{f}`: {e}")))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows, failed })
    }

    /// `(t, value)` pairs of one column, skipping empty fields.
    pub fn column(&self, name: &str) -> Option<Vec<(f64, f64)>> {
        let t = self.header.iter().position(|h| h == "t")?;
        let c = self.header.iter().position(|h| h == name)?;
        Some(
            self.rows
                .iter()
                .filter_map(|r| Some((r.get(t).copied().flatten()?, r.get(c).copied().flatten()?)))
                .collect(),
        )
    }
}

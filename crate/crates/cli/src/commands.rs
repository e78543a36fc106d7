//! The subcommands, as library functions so they can be tested in-process.

use crate::config::{resolve_output, sha256_file, ConfigError, RunConfig};
use crate::output::{csv_path, json_path, versions, write_json, Row, SeriesTable, SeriesWriter};
use qca_core::analysis::{error_ledger, AnalysisError, BoundCurve, ErrorSource, ExponentEstimate, LedgerInputs, Method, Window};
use qca_core::evolution::{Evolution, EvolutionError};
use qca_core::oracle::dense::{dense_reduced_evolve_from, OracleError};
use qca_core::oracle::mc::{pca_monte_carlo, PurityEstimator};
use qca_core::registry::compressors;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for a failed computation, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOutcome {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub rows: usize,
    pub csv_sha256: String,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    command: &'a str,
    config: &'a RunConfig,
    config_hash: String,
    rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    rule_table: Option<[f64; 8]>,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_at: Option<usize>,
    rows: usize,
    csv: String,
    csv_sha256: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    extra: BTreeMap<&'a str, serde_json::Value>,
    versions: crate::output::Versions,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

struct Finish<'a> {
    command: &'a str,
    cfg: &'a RunConfig,
    stem: PathBuf,
    rows: usize,
    failure: Option<(usize, String)>,
    extra: BTreeMap<&'a str, serde_json::Value>,
}

fn finish(f: Finish) -> Result<RunOutcome, CliError> {
    let csv = csv_path(&f.stem);
    let json = json_path(&f.stem);
    let update = f.cfg.update()?;
    let sha = sha256_file(&csv)?;
    let sidecar = Sidecar {
        command: f.command,
        config: f.cfg,
        config_hash: f.cfg.hash(),
        rule: update.name(),
        rule_table: update.rule().map(|r| r.column_order()),
        status: if f.failure.is_some() { "failed" } else { "ok" },
        error: f.failure.as_ref().map(|x| x.1.clone()),
        failed_at: f.failure.as_ref().map(|x| x.0),
        rows: f.rows,
        csv: file_name(&csv),
        csv_sha256: sha.clone(),
        extra: f.extra,
        versions: versions(),
    };
    write_json(&json, &sidecar)?;
    Ok(RunOutcome {
        csv,
        json,
        rows: f.rows,
        csv_sha256: sha,
        error: f.failure.map(|x| format!("t={}: {}", x.0, x.1)),
    })
}

fn failure_result(outcome: RunOutcome) -> Result<RunOutcome, CliError> {
    match &outcome.error {
        Some(e) => Err(CliError::Numerical(e.clone())),
        None => Ok(outcome),
    }
}

/// Runs one evolution and writes `<stem>.csv` and `<stem>.json`. A numerical
/// failure still writes both files, with the failure recorded in each, and
/// is returned in [`RunOutcome::error`].
pub fn run_config(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    if cfg.chi.is_none() {
        return Err(CliError::Usage("run needs `chi`".into()));
    }
    let update = cfg.update()?;
    let compressor = compressors()
        .get(&cfg.compressor)
        .ok_or_else(|| CliError::Usage(format!("unknown compressor `{}`", cfg.compressor)))?;
    let stem = cfg.output_stem("run");
    let dens = if cfg.densities { cfg.sites } else { 0 };
    let mut w = SeriesWriter::create(&csv_path(&stem), dens, &[])?;
    let mut rows = 0;
    let mut failure = None;
    let evo = Evolution::new(&update, cfg.evolution(), compressor.as_ref()).map_err(|e| CliError::Usage(e.to_string()))?;
    for item in evo {
        match item {
            Ok((rec, stats)) => {
                w.write(&Row::from_record(&rec, &stats))?;
                rows += 1;
            }
            Err(e) => {
                let t = e.step().unwrap_or(rows + 1);
                let msg = match &e {
                    EvolutionError::AtStep { source, .. } => source.to_string(),
                    other => other.to_string(),
                };
                log::error!("run stopped at t = {t}: {msg}");
                w.fail(t, &msg)?;
                failure = Some((t, msg));
                break;
            }
        }
    }
    drop(w);
    finish(Finish {
        command: "run",
        cfg,
        stem,
        rows,
        failure,
        extra: BTreeMap::new(),
    })
}

pub fn run(path: &Path) -> Result<RunOutcome, CliError> {
    failure_result(run_config(&RunConfig::load(path)?)?)
}

/// An explicit `output` gets a suffix so oracle files sit beside the run's.
fn oracle_stem(cfg: &RunConfig, kind: &str) -> PathBuf {
    let stem = cfg.output_stem(kind);
    match cfg.output {
        Some(_) => PathBuf::from(format!("{}_{kind}", stem.display())),
        None => stem,
    }
}

pub fn oracle_dense_config(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let update = cfg.update()?;
    let rows = dense_reduced_evolve_from(&update, &cfg.initial_row(), cfg.steps).map_err(|e| match e {
        OracleError::TooLarge { .. } => CliError::Usage(e.to_string()),
        other => CliError::Usage(other.to_string()),
    })?;
    let stem = oracle_stem(cfg, "dense");
    let dens = if cfg.densities { cfg.sites } else { 0 };
    let mut w = SeriesWriter::create(&csv_path(&stem), dens, &[])?;
    let mut failure = None;
    let mut n = 0;
    for r in &rows {
        match qca_core::observables::ObservableRecord::from_purities(r.t, r.purity(), r.classical_purity(), if cfg.densities { r.densities() } else { Vec::new() }) {
            Ok(rec) => {
                let mut row = Row::from_record(
                    &rec,
                    &qca_core::series::StepStats {
                        t: r.t,
                        max_bond: 0,
                        discarded_weight: 0.0,
                        trace_before_normalization: r.trace().re,
                    },
                );
                row.max_bond = None;
                w.write(&row)?;
                n += 1;
            }
            Err(e) => {
                w.fail(r.t, &e.to_string())?;
                failure = Some((r.t, e.to_string()));
                break;
            }
        }
    }
    drop(w);
    finish(Finish {
        command: "oracle dense",
        cfg,
        stem,
        rows: n,
        failure,
        extra: BTreeMap::new(),
    })
}

pub fn oracle_dense(path: &Path) -> Result<RunOutcome, CliError> {
    failure_result(oracle_dense_config(&RunConfig::load(path)?)?)
}

pub fn oracle_mc_config(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let update = cfg.update()?;
    let rule = update
        .rule()
        .ok_or_else(|| CliError::Usage("Monte Carlo needs a classical rule table".into()))?
        .clone();
    let seed = cfg.rng_seed.unwrap_or(0);
    let res = pca_monte_carlo(&rule, &cfg.initial_row(), cfg.steps, cfg.pairs, seed, PurityEstimator::Auto);
    let stem = oracle_stem(cfg, "mc");
    let dens = if cfg.densities { cfg.sites } else { 0 };
    let mut extra_header = vec!["gamma_cl_se".to_string()];
    extra_header.extend((0..dens).map(|k| format!("n{k}_se")));
    let mut w = SeriesWriter::create(&csv_path(&stem), dens, &extra_header)?;
    for s in &res.steps {
        let g = s.gamma_cl.mean;
        let mut row = Row {
            t: s.t,
            gamma_cl: Some(g),
            s2_cl: (g > 0.0).then(|| -g.ln() + 0.0),
            ..Default::default()
        };
        row.extra.push(s.gamma_cl.std_error);
        if cfg.densities {
            row.densities = s.densities.iter().map(|d| d.mean).collect();
            row.extra.extend(s.densities.iter().map(|d| d.std_error));
        }
        w.write(&row)?;
    }
    drop(w);
    let mut extra = BTreeMap::new();
    extra.insert("rng_seed", serde_json::json!(seed));
    extra.insert("rng", serde_json::json!("ChaCha8, stream = pair index"));
    extra.insert("pairs", serde_json::json!(cfg.pairs));
    extra.insert("estimator", serde_json::to_value(res.estimator).unwrap());
    finish(Finish {
        command: "oracle mc",
        cfg,
        stem,
        rows: res.steps.len(),
        failure: None,
        extra,
    })
}

pub fn oracle_mc(path: &Path) -> Result<RunOutcome, CliError> {
    oracle_mc_config(&RunConfig::load(path)?)
}

/// A sweep file: a base config and a grid of dotted-key overrides.
#[derive(Clone, Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub workers: Option<usize>,
    /// Stem for the manifest and the per-point files.
    #[serde(default)]
    pub output: Option<String>,
    pub base: toml::Table,
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub params: BTreeMap<String, toml::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub points: usize,
    pub failed: usize,
    pub entries: Vec<ManifestEntry>,
    pub versions: crate::output::Versions,
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().ok_or_else(|| CliError::Usage("empty grid key".into()))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("grid key `{key}` crosses a non-table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Cartesian product of the grid, last key varying fastest. A grid with no
/// keys, or with an empty value list, has no points.
pub fn expand_grid(grid: &BTreeMap<String, Vec<toml::Value>>) -> Vec<BTreeMap<String, toml::Value>> {
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Vec::new();
    }
    let mut points = vec![BTreeMap::new()];
    for (k, vals) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(k.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    points
}

pub fn sweep_spec(spec: &SweepSpec, workers: Option<usize>, stem: &Path) -> Result<(PathBuf, Manifest), CliError> {
    let points = expand_grid(&spec.grid);
    // build and validate every point before running any
    let mut configs = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let mut table = spec.base.clone();
        for (k, v) in p {
            set_dotted(&mut table, k, v.clone())?;
        }
        let point_stem = format!("{}_{i:04}", stem.display());
        table.insert("output".into(), toml::Value::String(point_stem));
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("grid point {i}: {e}")))?;
        configs.push(cfg);
    }
    let workers = workers.or(spec.workers).unwrap_or(1).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let results: Vec<ManifestEntry> = pool.install(|| {
        configs
            .par_iter()
            .zip(points.par_iter())
            .enumerate()
            .map(|(index, (cfg, params))| {
                let mut entry = ManifestEntry {
                    index,
                    params: params.clone(),
                    config_hash: Some(cfg.hash()),
                    status: "ok".into(),
                    csv: None,
                    csv_sha256: None,
                    error: None,
                };
                match run_config(cfg) {
                    Ok(out) => {
                        entry.csv = Some(file_name(&out.csv));
                        entry.csv_sha256 = Some(out.csv_sha256);
                        if let Some(e) = out.error {
                            entry.status = "failed".into();
                            entry.error = Some(e);
                        }
                    }
                    Err(e) => {
                        entry.status = "failed".into();
                        entry.error = Some(e.to_string());
                    }
                }
                entry
            })
            .collect()
    });
    let manifest = Manifest {
        points: results.len(),
        failed: results.iter().filter(|e| e.status != "ok").count(),
        entries: results,
        versions: versions(),
    };
    let path = PathBuf::from(format!("{}_manifest.json", stem.display()));
    write_json(&path, &manifest)?;
    Ok((path, manifest))
}

pub fn sweep(path: &Path, workers: Option<usize>) -> Result<(PathBuf, Manifest), CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let spec: SweepSpec = toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let default_stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    let stem = resolve_output(Path::new(spec.output.as_deref().unwrap_or(&default_stem)));
    sweep_spec(&spec, workers, &stem)
}

#[derive(Clone, Debug)]
pub struct FitRequest {
    pub series: PathBuf,
    pub observable: String,
    pub method: Method,
    pub window: Window,
    pub half_l: Option<PathBuf>,
    pub half_chi: Option<PathBuf>,
    pub finite_time: bool,
    pub lower: Option<(PathBuf, Window)>,
    pub upper: Option<(PathBuf, Window)>,
    pub symmetric: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct InputRef {
    pub role: String,
    pub path: String,
    pub sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub observable: String,
    pub estimate: ExponentEstimate,
    pub inputs: Vec<InputRef>,
    pub versions: crate::output::Versions,
}

fn load_column(path: &Path, observable: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let table = SeriesTable::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if table.failed {
        log::warn!("{} ends with a failure marker; fitting the rows present", path.display());
    }
    table
        .column(observable)
        .ok_or_else(|| CliError::Usage(format!("{}: no column `{observable}`", path.display())))
}

fn analysis_error(e: AnalysisError) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn fit(req: &FitRequest) -> Result<FitReport, CliError> {
    let primary = load_column(&req.series, &req.observable)?;
    let mut inputs = vec![InputRef {
        role: "primary".into(),
        path: req.series.display().to_string(),
        sha256: sha256_file(&req.series)?,
        window: Some(req.window),
    }];
    let mut ledger = LedgerInputs {
        symmetric: req.symmetric,
        ..Default::default()
    };
    let mut sources = Vec::new();
    if let Some(p) = &req.half_l {
        ledger.half_l = Some(load_column(p, &req.observable)?);
        sources.push(ErrorSource::FiniteL);
        inputs.push(InputRef { role: "finite-l".into(), path: p.display().to_string(), sha256: sha256_file(p)?, window: None });
    }
    if let Some(p) = &req.half_chi {
        ledger.half_chi = Some(load_column(p, &req.observable)?);
        sources.push(ErrorSource::FiniteChi);
        inputs.push(InputRef { role: "finite-chi".into(), path: p.display().to_string(), sha256: sha256_file(p)?, window: None });
    }
    if req.finite_time {
        sources.push(ErrorSource::FiniteTime);
    }
    for (src, curve, role) in [
        (ErrorSource::CriticalPointLower, &req.lower, "critical-point-lower"),
        (ErrorSource::CriticalPointUpper, &req.upper, "critical-point-upper"),
    ] {
        if let Some((p, w)) = curve {
            let bc = BoundCurve { points: load_column(p, &req.observable)?, window: *w };
            if src == ErrorSource::CriticalPointLower {
                ledger.lower = Some(bc);
            } else {
                ledger.upper = Some(bc);
            }
            sources.push(src);
            inputs.push(InputRef { role: role.into(), path: p.display().to_string(), sha256: sha256_file(p)?, window: Some(*w) });
        }
    }
    if req.symmetric && (ledger.lower.is_some() != ledger.upper.is_some()) {
        sources.push(if ledger.lower.is_some() { ErrorSource::CriticalPointUpper } else { ErrorSource::CriticalPointLower });
    }
    let estimate = error_ledger(&primary, req.method, req.window, &ledger, &sources).map_err(analysis_error)?;
    Ok(FitReport {
        observable: req.observable.clone(),
        estimate,
        inputs,
        versions: versions(),
    })
}

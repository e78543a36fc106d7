use qca_cli::commands::{expand_grid, fit, run_config, sweep, FitRequest};
use qca_cli::config::RunConfig;
use qca_cli::output::{Row, SeriesTable, SeriesWriter, FAILURE_MARKER};
use qca_core::analysis::{Method, Window};
use std::path::{Path, PathBuf};
use std::process::Command;

fn qca() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qca"))
}

fn config(dir: &Path, name: &str, body: &str) -> RunConfig {
    let text = format!("output = \"{}\"\n{body}", dir.join(name).display());
    let cfg: RunConfig = toml::from_str(&text).unwrap();
    cfg.validate().unwrap();
    cfg
}

const DKCA: &str = "sites = 9\nsteps = 6\nchi = 16\ndensities = true\n[rule]\nfamily = \"dkca\"\np1 = 0.645\np2 = 0.874\n";

#[test]
fn run_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_config(&config(dir.path(), "a", DKCA)).unwrap();
    let b = run_config(&config(dir.path(), "b", DKCA)).unwrap();
    assert_eq!(std::fs::read(&a.csv).unwrap(), std::fs::read(&b.csv).unwrap());
    assert_eq!(a.csv_sha256, b.csv_sha256);
    assert_eq!(a.rows, 6);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&a.json).unwrap()).unwrap();
    assert_eq!(json["status"], "ok");
    assert_eq!(json["csv_sha256"], a.csv_sha256.as_str());
    assert_eq!(json["rule"], "dkca(0.645,0.874)");
}

#[test]
fn eca150_has_no_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let body = "sites = 21\nsteps = 10\nchi = 4\n[rule]\nfamily = \"eca\"\nn = 150\n";
    let out = run_config(&config(dir.path(), "x", body)).unwrap();
    let t = SeriesTable::read(&out.csv).unwrap();
    assert!(t.column("s2").unwrap().iter().all(|&(_, s)| s.abs() < 1e-12));
    assert!(t.column("max_bond").unwrap().iter().all(|&(_, b)| b == 1.0));
}

#[test]
fn dense_oracle_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let body = "sites = 6\nsteps = 5\nseed_site = 3\nchi = 256\ncutoff = 0.0\ndensities = true\n[rule]\nfamily = \"bbr\"\np1 = 0.61\np2 = 0.2\n";
    let mps = run_config(&config(dir.path(), "mps", body)).unwrap();
    let dense = qca_cli::commands::oracle_dense_config(&config(dir.path(), "dense", body)).unwrap();
    let (a, b) = (SeriesTable::read(&mps.csv).unwrap(), SeriesTable::read(&dense.csv).unwrap());
    assert_eq!(a.header, b.header);
    for col in ["gamma", "gamma_cl", "c2", "n2", "n4"] {
        for (x, y) in a.column(col).unwrap().iter().zip(b.column(col).unwrap()) {
            assert!((x.1 - y.1).abs() < 1e-10, "{col} {x:?} {y:?}");
        }
    }
    assert!(b.column("max_bond").unwrap().is_empty());
}

#[test]
fn monte_carlo_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let body = "sites = 7\nsteps = 4\nrng_seed = 11\npairs = 500\n[rule]\nfamily = \"dkca\"\np1 = 0.6\np2 = 0.874\n";
    let a = qca_cli::commands::oracle_mc_config(&config(dir.path(), "a", body)).unwrap();
    let b = qca_cli::commands::oracle_mc_config(&config(dir.path(), "b", body)).unwrap();
    assert_eq!(a.csv_sha256, b.csv_sha256);
    let t = SeriesTable::read(&a.csv).unwrap();
    assert!(t.header.contains(&"gamma_cl_se".to_string()));
    assert!(t.column("gamma").unwrap().is_empty());
}

fn write_sweep(dir: &Path, grid: &str) -> PathBuf {
    let p = dir.join("grid.toml");
    let text = format!(
        "output = \"{}\"\n[base]\nsites = 7\nsteps = 4\nchi = 8\n[base.rule]\nfamily = \"bbr\"\np1 = 0.5\np2 = 0.2\n[grid]\n{grid}",
        dir.join("g").display()
    );
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn sweep_is_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_sweep(dir.path(), "\"rule.p1\" = [0.55, 0.6, 0.65]\n\"rule.p2\" = [0.1, 0.2]\n");
    let (_, one) = sweep(&spec, Some(1)).unwrap();
    let (_, eight) = sweep(&spec, Some(8)).unwrap();
    assert_eq!(one.points, 6);
    let hashes = |m: &qca_cli::commands::Manifest| m.entries.iter().map(|e| e.csv_sha256.clone()).collect::<Vec<_>>();
    assert_eq!(hashes(&one), hashes(&eight));
    assert_eq!(one.entries[1].params["rule.p2"], toml::Value::Float(0.2));
}

#[test]
fn empty_grid_gives_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_sweep(dir.path(), "\"rule.p1\" = []\n");
    let out = qca().arg("sweep").arg(&spec).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["points"], 0);
    assert!(expand_grid(&Default::default()).is_empty());
}

#[test]
fn fit_recovers_synthetic_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("syn.csv");
    let mut w = SeriesWriter::create(&path, 0, &[]).unwrap();
    for t in 1..=200 {
        w.write(&Row { t, s2: Some(3.0 / t as f64), ..Default::default() }).unwrap();
    }
    drop(w);
    let req = FitRequest {
        series: path.clone(),
        observable: "s2".into(),
        method: Method::LogLogLeastSquares,
        window: Window::new(50.0, 200.0),
        half_l: None,
        half_chi: None,
        finite_time: true,
        lower: None,
        upper: None,
        symmetric: false,
    };
    let r = fit(&req).unwrap();
    assert!((r.estimate.exponent - 1.0).abs() < 1e-12);
    assert!(r.estimate.reported_error < 1e-12);

    let report = dir.path().join("fit.json");
    let out = qca()
        .args(["fit", path.to_str().unwrap(), "--window", "50", "200", "--method", "effective", "--out"])
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!((v["estimate"]["exponent"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let variant = dir.path().join("half_chi.csv");
    let mut w = SeriesWriter::create(&variant, 0, &[]).unwrap();
    for t in 1..=200 {
        w.write(&Row { t, s2: Some((t as f64).powf(-1.01)), ..Default::default() }).unwrap();
    }
    drop(w);
    let with_ledger = fit(&FitRequest { half_chi: Some(variant), ..req.clone() }).unwrap();
    let d = with_ledger.estimate.error_ledger[&qca_core::analysis::ErrorSource::FiniteChi];
    assert!((d - 0.01).abs() < 1e-12);
    assert_eq!(with_ledger.estimate.reported_error, d);
    assert_eq!(with_ledger.inputs.len(), 2);

    let out = qca().args(["fit", path.to_str().unwrap(), "--window", "500", "600"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn partial_series_keeps_rows_before_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let mut w = SeriesWriter::create(&path, 0, &[]).unwrap();
    w.write(&Row { t: 1, s2: Some(0.5), ..Default::default() }).unwrap();
    w.fail(2, "trace vanished").unwrap();
    drop(w);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().last().unwrap().starts_with(FAILURE_MARKER));
    let t = SeriesTable::read(&path).unwrap();
    assert!(t.failed);
    assert_eq!(t.column("s2").unwrap(), vec![(1.0, 0.5)]);
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "sites = 8\nsteps = 3\nchi = 4\n[rule]\nfamily = \"eca\"\nn = 150\n").unwrap();
    assert_eq!(qca().arg("run").arg(&p).output().unwrap().status.code(), Some(2));
    std::fs::write(&p, "sites = 9\nsteps = 3\nchi = 4\n[rule]\nfamily = \"dkca\"\np1 = 2.0\np2 = 0.1\n").unwrap();
    assert_eq!(qca().arg("run").arg(&p).output().unwrap().status.code(), Some(2));
    std::fs::write(&p, "sites = 9\nsteps = 3\n[rule]\nfamily = \"eca\"\nn = 150\n").unwrap();
    assert_eq!(qca().args(["oracle", "dense"]).arg(&p).output().unwrap().status.code(), Some(2));
}

#[test]
fn output_dir_env_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.toml");
    std::fs::write(&p, "sites = 5\nsteps = 2\nchi = 4\noutput = \"sub/r\"\n[rule]\nfamily = \"eca\"\nn = 90\n").unwrap();
    let out = qca().arg("run").arg(&p).env("QCA_OUTPUT_DIR", dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("sub/r.csv").exists());
    assert!(dir.path().join("sub/r.json").exists());
}

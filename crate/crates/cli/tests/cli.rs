use std::fs;
use std::path::Path;
use std::process::Command;

use steinflow::diagnostics::METRICS_SCHEMA;
use steinflow_cli::analyze::{analyze_to_dir, AnalysisReport, RATE_TABLE_FILE, REPORT_FILE};
use steinflow_cli::experiment::{config_hash, run_experiment, Manifest, MANIFEST_FILE, METRICS_FILE, PLOT_FILE};
use steinflow_cli::{parse_config, ConfigError, ExperimentConfig};

fn small(dir: &Path, extra: &[&str]) -> ExperimentConfig {
    let mut overrides = vec![
        "N=40".to_string(),
        "n_steps=20".to_string(),
        "record_every=5".to_string(),
        format!("output_dir={}", dir.display()),
    ];
    overrides.extend(extra.iter().map(|s| s.to_string()));
    parse_config(r#"{"target": "gauss-correlated"}"#, &overrides).unwrap()
}

fn data_rows(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join(METRICS_FILE))
        .unwrap()
        .lines()
        .skip(2)
        .map(String::from)
        .collect()
}

fn kl_column(dir: &Path) -> Vec<f64> {
    data_rows(dir)
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn default_config_matches_reference_setup() {
    let cfg = parse_config(r#"{"target": "gauss-correlated"}"#, &[]).unwrap();
    assert_eq!((cfg.n_particles, cfg.n_steps), (500, 1000));
    assert_eq!((cfg.tau, cfg.epsilon, cfg.bandwidth), (0.1, 0.1, 0.1));
    assert_eq!(cfg.init_mean, vec![1.0, 1.0]);
    assert_eq!(cfg.init_cov, vec![vec![3.0, 2.0], vec![2.0, 3.0]]);
    assert_eq!(
        (cfg.damping.as_str(), cfg.speed_restart, cfg.gradient_restart),
        ("restart-nesterov", true, true)
    );
    assert!(cfg.q_is_precision);
    assert_eq!(cfg.record_every, 10);
}

#[test]
fn config_errors_name_the_key() {
    let key_of = |text: &str| match parse_config(text, &[]).unwrap_err() {
        ConfigError::Key { key, .. } => key,
        other => panic!("{other}"),
    };
    assert_eq!(key_of(r#"{"target": "gauss-correlated", "tau": -1}"#), "tau");
    assert_eq!(key_of(r#"{"target": "gauss-correlated", "sampler": "hmc"}"#), "sampler");
    assert_eq!(key_of(r#"{"target": "banana"}"#), "target");
    assert_eq!(key_of(r#"{"target": "quartic", "kernel": "laplace"}"#), "kernel");
    assert_eq!(
        key_of(r#"{"target": "quartic", "init_cov": [[1, 2], [2, 1]]}"#),
        "init_cov"
    );
    assert_eq!(
        key_of(r#"{"target": "quartic", "damping": "constant", "beta": 1.5}"#),
        "beta"
    );
    assert_eq!(key_of(r#"{"target": "quartic", "init_mean": [0, 0, 0]}"#), "init_mean");
    assert_eq!(
        key_of(r#"{"target": "quartic", "kl_method": "gaussian-fit"}"#),
        "kl_method"
    );
    assert!(matches!(parse_config("[1, 2", &[]), Err(ConfigError::Syntax { .. })));
}

#[test]
fn metrics_header_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(dir.path(), &["n_steps=0"])).unwrap();
    let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(METRICS_SCHEMA));
    assert_eq!(
        lines.next(),
        Some("iteration,kl_estimate,mean_0,mean_1,cov_0_0,cov_1_0,cov_0_1,cov_1_1,grad_restart_stat,mean_speed,kl_regularized")
    );
}

#[test]
fn zero_steps_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(dir.path(), &["n_steps=0"])).unwrap();
    let rows = data_rows(dir.path());
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("0,"));
    assert!(dir.path().join("snapshots/particles_0.csv").exists());
}

#[test]
fn records_every_interval_and_last_step() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&small(dir.path(), &["n_steps=12"])).unwrap();
    let iters: Vec<usize> = summary.records.iter().map(|r| r.iteration).collect();
    assert_eq!(iters, vec![0, 5, 10, 12]);
    let snap = fs::read_to_string(dir.path().join("snapshots/particles_12.csv")).unwrap();
    assert_eq!(snap.lines().count(), 41);
    assert_eq!(snap.lines().next(), Some("x0,x1"));
    let svg = fs::read_to_string(dir.path().join(PLOT_FILE)).unwrap();
    assert_eq!(svg.matches("<circle").count(), 40);
}

#[test]
fn same_seed_gives_identical_metrics() {
    for sampler in ["asvgd", "svgd", "ula", "mala", "uld"] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let s = format!("sampler={sampler}");
        run_experiment(&small(a.path(), &[&s])).unwrap();
        run_experiment(&small(b.path(), &[&s])).unwrap();
        let read = |d: &Path| fs::read(d.join(METRICS_FILE)).unwrap();
        assert_eq!(read(a.path()), read(b.path()), "{sampler}");
    }
}

#[test]
fn bilinear_asvgd_reduces_kl() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(
        r#"{"target": "gauss-correlated", "kernel": "bilinear", "tau": 0.01, "record_every": 100}"#,
        &[format!("output_dir={}", dir.path().display())],
    )
    .unwrap();
    run_experiment(&cfg).unwrap();
    let kl = kl_column(dir.path());
    let (first, last) = (kl[0], *kl.last().unwrap());
    assert!(first / last >= 100.0, "KL {first} -> {last}");
}

#[test]
fn manifest_hash_tracks_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), &["n_steps=1"]);
    let summary = run_experiment(&cfg).unwrap();
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest, summary.manifest);
    assert_eq!(manifest.config, cfg);
    assert_eq!(manifest.config_hash, config_hash(&cfg));
    assert_eq!(manifest.config_hash.len(), 64);

    let base = serde_json::to_value(&cfg).unwrap();
    let variants = [
        ("tau", serde_json::json!(0.2)),
        ("seed", serde_json::json!(1)),
        ("N", serde_json::json!(41)),
        ("sampler", serde_json::json!("svgd")),
        ("q_is_precision", serde_json::json!(false)),
        ("init_cov", serde_json::json!([[3.0, 2.0], [2.0, 3.5]])),
        ("output_dir", serde_json::json!("elsewhere")),
        ("alpha", serde_json::json!(1.0)),
    ];
    let mut hashes = vec![config_hash(&cfg)];
    for (key, value) in variants {
        let mut v = base.clone();
        v[key] = value;
        let changed: ExperimentConfig = serde_json::from_value(v).unwrap();
        hashes.push(config_hash(&changed));
    }
    let mut unique = hashes.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), hashes.len());
    assert_eq!(config_hash(&cfg.clone()), hashes[0]);
}

#[test]
fn analyze_isotropic_target() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(
        r#"{"target": "gaussian", "target_q": [[1, 0], [0, 1]], "q_is_precision": false, "kernel_theta": 0.5}"#,
        &[format!("output_dir={}", dir.path().display())],
    )
    .unwrap();
    let report = analyze_to_dir(&cfg).unwrap();
    assert!((report.alpha_star - 2.0).abs() < 1e-15);
    let rates = report.rates.unwrap();
    assert_eq!(rates.rho, 0.0);
    assert!((rates.optimal_damping - 2.0).abs() < 1e-15);
    let text = fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
    let parsed: AnalysisReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, report);
}

#[test]
fn kernel_sweep_is_u_shaped_around_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(
        r#"{"target": "gaussian", "target_q": [[2]], "target_mean": [1], "q_is_precision": false,
            "init_mean": [0], "init_cov": [[1]], "kernel_theta": 1.0}"#,
        &[format!("output_dir={}", dir.path().display())],
    )
    .unwrap();
    let report = analyze_to_dir(&cfg).unwrap();
    assert!((report.optimal_a_1d.unwrap() - 0.2).abs() < 1e-15);
    let table = fs::read_to_string(dir.path().join(RATE_TABLE_FILE)).unwrap();
    let rows: Vec<Vec<f64>> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 61);
    let kappa: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let argmin = (0..kappa.len()).min_by(|&i, &j| kappa[i].total_cmp(&kappa[j])).unwrap();
    assert!((rows[argmin][1] / 0.2).ln().abs() <= (10f64.ln() / 30.0) + 1e-12);
    assert!(kappa[..argmin].windows(2).all(|w| w[1] <= w[0]));
    assert!(kappa[argmin..].windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn analyze_rejects_non_commuting_accelerated_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(
        r#"{"target": "gaussian", "target_q": [[1, 0], [0, 2]], "kernel_a": [[1, 0.3], [0.3, 1]]}"#,
        &[format!("output_dir={}", dir.path().display())],
    )
    .unwrap();
    assert!(analyze_to_dir(&cfg).is_err());
    let mut svgd = cfg.clone();
    svgd.sampler = "svgd".into();
    assert!(analyze_to_dir(&svgd).unwrap().asvgd_centered.is_none());
}

fn binary() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_steinflow"));
    c.env_remove("STEINFLOW_OUT");
    c
}

#[test]
fn binary_run_honours_output_env_and_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"target": "quartic", "N": 30, "n_steps": 4, "output_dir": "unused"}"#,
    )
    .unwrap();
    let out = dir.path().join("from-env");
    let status = binary()
        .args(["run", config.to_str().unwrap(), "--override", "sampler=svgd"])
        .env("STEINFLOW_OUT", &out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join(METRICS_FILE).exists());
    assert!(!dir.path().join("unused").exists());

    let failed = binary()
        .args(["run", config.to_str().unwrap(), "--override", "tau=-1"])
        .output()
        .unwrap();
    assert!(!failed.status.success());
    assert!(String::from_utf8_lossy(&failed.stderr).contains("tau"));
}

#[test]
fn binary_sweep_offsets_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let body = format!(
        r#"{{"target": "gauss-correlated", "N": 20, "n_steps": 3, "seed": 7, "output_dir": "{}"}}"#,
        dir.path().join("sweep").display()
    );
    fs::write(&config, body).unwrap();
    let status = binary()
        .args([
            "sweep",
            config.to_str().unwrap(),
            "--param",
            "tau",
            "--values",
            "0.05,0.1,0.2",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let table = fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[2], (7 + i).to_string());
        assert_eq!(r[4], "ok");
    }
    assert!(dir.path().join("sweep/tau_0.2/metrics.csv").exists());
}

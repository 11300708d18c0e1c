//! `run` and `sweep`: particle experiments with CSV traces, snapshots, an SVG
//! plot and a manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use steinflow::diagnostics::{format_float, MetricRecord};
use steinflow::samplers::{gradient_restart_stat, SamplerKind};
use steinflow::{empirical_moments, kl_estimate, Sampler};

use crate::config::{parse_config, ConfigError, ExperimentConfig};
use crate::{svg, CliError};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const PLOT_FILE: &str = "trajectory.svg";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// `sha256` of the resolved config, framed as a git blob.
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
}

/// Hex `sha256("blob <len>\0" + canonical JSON of cfg)`.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let body = serde_json::to_string(cfg).expect("config serializes");
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()).as_bytes());
    h.update(body.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    files: Vec<String>,
) -> Result<Manifest, CliError> {
    let manifest = Manifest {
        tool: "steinflow".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub records: Vec<MetricRecord>,
    pub manifest: Manifest,
}

impl RunSummary {
    pub fn final_kl(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.kl_estimate)
    }
}

fn snapshot_csv(x: &DMatrix<f64>) -> String {
    let mut out = (0..x.ncols()).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in x.row_iter() {
        let cols: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

/// Runs one experiment and writes its outputs to `cfg.output_dir`.
///
/// Metrics and snapshots are taken at iteration 0, every `record_every`
/// steps and at the last step. Metric rows are flushed as they are produced,
/// so a failing run leaves the trace up to the failure.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let resolved = cfg.resolve()?;
    let dir = cfg.output_dir.clone();
    let snap_dir = dir.join(SNAPSHOT_DIR);
    create_dir(&snap_dir)?;

    let metrics_path = dir.join(METRICS_FILE);
    let mut metrics = BufWriter::new(File::create(&metrics_path).map_err(io_at(&metrics_path))?);
    let d = resolved.init_mean.len();
    writeln!(metrics, "{}", steinflow::diagnostics::METRICS_SCHEMA).map_err(io_at(&metrics_path))?;
    writeln!(metrics, "{}", MetricRecord::csv_header(d)).map_err(io_at(&metrics_path))?;

    let target = resolved.sampler.target.clone();
    let kernel = resolved.sampler.kernel.clone();
    let mut sampler = Sampler::from_gaussian_init(
        resolved.kind,
        resolved.sampler,
        cfg.n_particles,
        &resolved.init_mean,
        &resolved.init_cov,
    )?;

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut files = vec![METRICS_FILE.to_string()];
    let mut mean_speed = 0.0;
    let mut iteration = 0;
    loop {
        if iteration % cfg.record_every == 0 || iteration == cfg.n_steps {
            let x = sampler.positions();
            let (mean, cov) = empirical_moments(x)?;
            let kl = kl_estimate(x, &target, resolved.kl_method, cfg.seed)?;
            let grad_restart_stat = match resolved.kind {
                SamplerKind::Asvgd => gradient_restart_stat(sampler.ensemble(), &kernel, &target)?,
                _ => f64::NAN,
            };
            let record = MetricRecord {
                iteration,
                kl_estimate: kl.value,
                mean,
                cov,
                grad_restart_stat,
                mean_speed,
                kl_regularized: kl.regularized,
            };
            writeln!(metrics, "{}", record.csv_row()).map_err(io_at(&metrics_path))?;
            metrics.flush().map_err(io_at(&metrics_path))?;
            let name = format!("{SNAPSHOT_DIR}/particles_{iteration}.csv");
            write_file(&dir.join(&name), snapshot_csv(x).as_bytes())?;
            files.push(name);
            records.push(record);
            snapshots.push(x.clone());
        }
        if iteration == cfg.n_steps {
            break;
        }
        mean_speed = sampler.step()?.mean_speed;
        iteration += 1;
    }
    drop(metrics);

    let potential = |x: f64, y: f64| target.potential(&[x, y]).unwrap_or(f64::NAN);
    let level: Option<&dyn Fn(f64, f64) -> f64> = if d == 2 { Some(&potential) } else { None };
    write_file(&dir.join(PLOT_FILE), svg::render(&snapshots, level).as_bytes())?;
    files.push(PLOT_FILE.to_string());

    let manifest = write_manifest(&dir, "run", cfg, files)?;
    Ok(RunSummary {
        output_dir: dir,
        records,
        manifest,
    })
}

/// Configs of a sweep over `param`: entry `i` sets `param` to `values[i]`,
/// writes to `<output_dir>/<param>_<value>` and, unless `param` is `seed`,
/// uses seed `base_seed + i`.
pub fn sweep_configs(
    text: &str,
    overrides: &[String],
    param: &str,
    values: &[String],
) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let base = parse_config(text, overrides)?;
    let mut out = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let mut extra = overrides.to_vec();
        extra.push(format!("{param}={v}"));
        let mut cfg = parse_config(text, &extra)?;
        if param != "seed" {
            cfg.seed = base.seed + i as u64;
        }
        let label: String = v
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        cfg.output_dir = base.output_dir.join(format!("{param}_{label}"));
        out.push(cfg);
    }
    Ok(out)
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub value: String,
    pub config: ExperimentConfig,
    pub result: Result<RunSummary, CliError>,
}

/// Runs the sweep entries on one worker thread each and writes `sweep.csv`
/// into the base output directory.
pub fn run_sweep(
    base_dir: &Path,
    param: &str,
    values: &[String],
    configs: Vec<ExperimentConfig>,
) -> Result<Vec<SweepOutcome>, CliError> {
    let results: Vec<Result<RunSummary, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || run_experiment(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(Err(CliError::Panic)))
            .collect()
    });
    create_dir(base_dir)?;
    let mut table = format!("index,{param},seed,final_kl,status,output_dir\n");
    let mut outcomes = Vec::with_capacity(values.len());
    for (i, ((value, config), result)) in values.iter().zip(configs).zip(results).enumerate() {
        let (kl, status) = match &result {
            Ok(r) => (format_float(r.final_kl()), "ok".to_string()),
            Err(e) => (String::new(), format!("\"{}\"", e.to_string().replace('"', "'"))),
        };
        table.push_str(&format!(
            "{i},{},{},{kl},{status},{}\n",
            csv_field(value),
            config.seed,
            config.output_dir.display()
        ));
        outcomes.push(SweepOutcome {
            value: value.clone(),
            config,
            result,
        });
    }
    write_file(&base_dir.join(SWEEP_FILE), table.as_bytes())?;
    Ok(outcomes)
}

fn csv_field(v: &str) -> String {
    if v.parse::<f64>().is_ok() || v == "true" || v == "false" {
        v.to_string()
    } else {
        format!("\"{}\"", v.replace('"', "\"\""))
    }
}

//! Flat JSON experiment configuration.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use steinflow::samplers::SamplerKind;
use steinflow::{builtin_target, DampingSchedule, KernelSpec, KlMethod, SamplerConfig, TargetSpec};

/// Environment variable that replaces `output_dir`.
pub const OUT_ENV: &str = "STEINFLOW_OUT";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed config at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config key `{key}`: {message}")]
    Key { key: String, message: String },

    #[error("invalid config: {0}")]
    Invalid(String),

    #[error("override `{0}` is not of the form key=value")]
    Override(String),
}

impl ConfigError {
    fn key(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Key {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

/// Every experiment parameter. Missing keys take the defaults below; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of `asvgd`, `svgd`, `ula`, `mala`, `uld`.
    pub sampler: String,
    /// `gaussian` (bandwidth `σ²`) or `bilinear` (matrix `A`).
    pub kernel: String,
    /// `σ²` of the Gaussian kernel.
    pub bandwidth: f64,
    /// `A = θ I` when `kernel_a` is absent.
    pub kernel_theta: f64,
    pub kernel_a: Option<Vec<Vec<f64>>>,
    /// Built-in target name, or `gaussian` with `target_mean` and `target_q`.
    pub target: Option<String>,
    pub target_mean: Option<Vec<f64>>,
    pub target_q: Option<Vec<Vec<f64>>>,
    /// Read the target matrix `Q` as a precision instead of a covariance.
    pub q_is_precision: bool,
    #[serde(rename = "N", alias = "n_particles")]
    pub n_particles: usize,
    pub n_steps: usize,
    pub tau: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// `restart-nesterov` or `constant`.
    pub damping: String,
    /// Damping factor for `constant`.
    pub beta: f64,
    pub speed_restart: bool,
    pub gradient_restart: bool,
    pub nesterov_offset: f64,
    pub init_mean: Vec<f64>,
    pub init_cov: Vec<Vec<f64>>,
    pub record_every: usize,
    pub output_dir: PathBuf,
    /// `gaussian-fit` or `kde`; defaults by target type.
    pub kl_method: Option<String>,
    pub alg2_literal: bool,
    pub restart_literal: bool,
    pub include_interaction: bool,
    /// Damping for the accelerated spectrum in `analyze`; defaults to `α*`.
    pub alpha: Option<f64>,
    /// Parameter swept in `rate_table.csv`: `a` or `alpha`.
    pub rate_sweep: String,
    pub sweep_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sampler: "asvgd".into(),
            kernel: "gaussian".into(),
            bandwidth: 0.1,
            kernel_theta: 1.0,
            kernel_a: None,
            target: None,
            target_mean: None,
            target_q: None,
            q_is_precision: true,
            n_particles: 500,
            n_steps: 1000,
            tau: 0.1,
            epsilon: 0.1,
            seed: 0,
            damping: "restart-nesterov".into(),
            beta: 0.9,
            speed_restart: true,
            gradient_restart: true,
            nesterov_offset: 3.0,
            init_mean: vec![1.0, 1.0],
            init_cov: vec![vec![3.0, 2.0], vec![2.0, 3.0]],
            record_every: 10,
            output_dir: PathBuf::from("out"),
            kl_method: None,
            alg2_literal: false,
            restart_literal: false,
            include_interaction: true,
            alpha: None,
            rate_sweep: "a".into(),
            sweep_points: 61,
        }
    }
}

/// Validated, library-level view of a config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub kind: SamplerKind,
    pub sampler: SamplerConfig,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
    pub kl_method: KlMethod,
}

/// Parses `key=value`; the value is read as JSON and falls back to a string.
pub fn parse_override(text: &str) -> Result<(String, Value), ConfigError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(text.to_string()))?;
    if key.is_empty() {
        return Err(ConfigError::Override(text.to_string()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Parses config text, applies `key=value` overrides and then
/// [`OUT_ENV`] if set, and validates the result.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut map: Map<String, Value> = serde_json::from_str(text).map_err(syntax)?;
    for o in overrides {
        let (key, value) = parse_override(o)?;
        map.insert(key, value);
    }
    if let Ok(out) = std::env::var(OUT_ENV) {
        if !out.is_empty() {
            map.insert("output_dir".into(), Value::String(out));
        }
    }
    let cfg: ExperimentConfig = serde_json::from_value(Value::Object(map.clone())).map_err(|e| {
        let message = e.to_string();
        match offending_key(&map) {
            Some(key) => ConfigError::Key { key, message },
            None => ConfigError::Invalid(message),
        }
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

fn syntax(e: serde_json::Error) -> ConfigError {
    ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// First key that fails to deserialize on its own.
fn offending_key(map: &Map<String, Value>) -> Option<String> {
    map.iter()
        .find(|(k, v)| {
            let single = Map::from_iter([((*k).clone(), (*v).clone())]);
            serde_json::from_value::<ExperimentConfig>(Value::Object(single)).is_err()
        })
        .map(|(k, _)| k.clone())
}

fn matrix(key: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(ConfigError::key(key, "must be a non-empty square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ExperimentConfig {
    /// Checks every field and builds the library objects.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let kind = SamplerKind::parse(&self.sampler).map_err(|e| ConfigError::key("sampler", e.to_string()))?;
        let target = self.target_spec()?;
        let d = self.init_mean.len();
        if d == 0 {
            return Err(ConfigError::key("init_mean", "must not be empty"));
        }
        if let Some(td) = target.dim() {
            if td != d {
                return Err(ConfigError::key(
                    "init_mean",
                    format!("has dimension {d} but the target has dimension {td}"),
                ));
            }
        }
        let init_cov = matrix("init_cov", &self.init_cov)?;
        if init_cov.nrows() != d {
            return Err(ConfigError::key("init_cov", format!("must be {d}x{d}")));
        }
        if init_cov.clone().cholesky().is_none() || init_cov != init_cov.transpose() {
            return Err(ConfigError::key("init_cov", "must be symmetric positive definite"));
        }
        let kernel = self.kernel_spec(d)?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(ConfigError::key("tau", format!("must be positive, got {}", self.tau)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(ConfigError::key(
                "epsilon",
                format!("must be nonnegative, got {}", self.epsilon),
            ));
        }
        if self.n_particles < 2 {
            return Err(ConfigError::key(
                "N",
                format!("must be at least 2, got {}", self.n_particles),
            ));
        }
        if self.record_every == 0 {
            return Err(ConfigError::key("record_every", "must be at least 1"));
        }
        if self.sweep_points < 2 {
            return Err(ConfigError::key("sweep_points", "must be at least 2"));
        }
        if !["a", "alpha"].contains(&self.rate_sweep.as_str()) {
            return Err(ConfigError::key("rate_sweep", "must be `a` or `alpha`"));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(ConfigError::key("alpha", format!("must be nonnegative, got {a}")));
            }
        }
        let damping = match self.damping.as_str() {
            "restart-nesterov" => DampingSchedule::RestartNesterov {
                speed_restart: self.speed_restart,
                gradient_restart: self.gradient_restart,
                offset: self.nesterov_offset,
            },
            "constant" => DampingSchedule::Constant(self.beta),
            other => {
                return Err(ConfigError::key(
                    "damping",
                    format!("unknown schedule `{other}`; valid: restart-nesterov, constant"),
                ))
            }
        };
        damping.validate().map_err(|e| {
            let key = if self.damping == "constant" {
                "beta"
            } else {
                "nesterov_offset"
            };
            ConfigError::key(key, e.to_string())
        })?;
        let kl_method = match &self.kl_method {
            Some(name) => KlMethod::parse(name).map_err(|e| ConfigError::key("kl_method", e.to_string()))?,
            None => KlMethod::default_for(&target),
        };
        if kl_method == KlMethod::GaussianFit && target.as_gaussian().is_none() {
            return Err(ConfigError::key("kl_method", "gaussian-fit needs a Gaussian target"));
        }
        let mut sampler = SamplerConfig::new(kernel, target)
            .with_step_size(self.tau)
            .with_regularization(self.epsilon)
            .with_damping(damping)
            .with_seed(self.seed)
            .with_steps(self.n_steps);
        sampler.alg2_literal = self.alg2_literal;
        sampler.restart_literal = self.restart_literal;
        sampler.include_interaction = self.include_interaction;
        sampler
            .validate()
            .map_err(|e| ConfigError::key("sampler", e.to_string()))?;
        Ok(Resolved {
            kind,
            sampler,
            init_mean: DVector::from_vec(self.init_mean.clone()),
            init_cov,
            kl_method,
        })
    }

    pub fn target_spec(&self) -> Result<TargetSpec, ConfigError> {
        let name = self
            .target
            .as_deref()
            .ok_or_else(|| ConfigError::key("target", "is required"))?;
        if name != "gaussian" {
            return builtin_target(name, self.q_is_precision).map_err(|e| ConfigError::key("target", e.to_string()));
        }
        let q = matrix(
            "target_q",
            self.target_q
                .as_ref()
                .ok_or_else(|| ConfigError::key("target_q", "is required for the gaussian target"))?,
        )?;
        let d = q.nrows();
        let mean = DVector::from_vec(self.target_mean.clone().unwrap_or_else(|| vec![0.0; d]));
        if mean.len() != d {
            return Err(ConfigError::key("target_mean", format!("must have length {d}")));
        }
        let t = if self.q_is_precision {
            TargetSpec::gaussian_from_precision(mean, q)
        } else {
            TargetSpec::gaussian(mean, q)
        };
        t.map_err(|e| ConfigError::key("target_q", e.to_string()))
    }

    /// The bilinear kernel matrix `A`.
    pub fn kernel_matrix(&self, d: usize) -> Result<DMatrix<f64>, ConfigError> {
        let a = match &self.kernel_a {
            Some(rows) => matrix("kernel_a", rows)?,
            None => {
                if !(self.kernel_theta > 0.0 && self.kernel_theta.is_finite()) {
                    return Err(ConfigError::key("kernel_theta", "must be positive"));
                }
                DMatrix::identity(d, d) * self.kernel_theta
            }
        };
        if a.nrows() != d {
            return Err(ConfigError::key("kernel_a", format!("must be {d}x{d}")));
        }
        Ok(a)
    }

    fn kernel_spec(&self, d: usize) -> Result<KernelSpec, ConfigError> {
        match self.kernel.as_str() {
            "gaussian" => {
                KernelSpec::gaussian(self.bandwidth).map_err(|e| ConfigError::key("bandwidth", e.to_string()))
            }
            "bilinear" => {
                KernelSpec::bilinear(self.kernel_matrix(d)?).map_err(|e| ConfigError::key("kernel_a", e.to_string()))
            }
            other => Err(ConfigError::key(
                "kernel",
                format!("unknown kernel `{other}`; valid: gaussian, bilinear"),
            )),
        }
    }

    /// Gaussian target moments `(b, Q)` with `Q` the covariance.
    pub fn gaussian_target(&self) -> Result<(DVector<f64>, DMatrix<f64>), ConfigError> {
        let t = self.target_spec()?;
        let g = t
            .as_gaussian()
            .ok_or_else(|| ConfigError::key("target", "analysis needs a Gaussian target"))?;
        Ok((g.mean.clone(), g.cov.clone()))
    }
}

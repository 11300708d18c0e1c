//! Sample-quality diagnostics: empirical moments, Monte-Carlo KL estimates and
//! per-iteration metric records.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::kl_gaussians;
use crate::kernels::median_bandwidth;
use crate::linalg::sym;
use crate::targets::TargetSpec;

/// Ridge added to a singular fitted covariance.
pub const COV_RIDGE: f64 = 1e-8;
/// Importance samples used for the normalising constant in the KDE estimator.
pub const KDE_IS_DRAWS: usize = 10_000;

/// Sample mean and unbiased sample covariance (divisor `N - 1`) of the rows of `x`.
pub fn empirical_moments(x: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "covariance needs at least two particles, got {n}"
        )));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    Ok((mean, sym(&cov)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlMethod {
    /// KL between the fitted Gaussian and a Gaussian target.
    GaussianFit,
    /// Gaussian kernel density estimate of the particle density.
    Kde,
}

impl KlMethod {
    pub const NAMES: [&'static str; 2] = ["gaussian-fit", "kde"];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gaussian-fit" => Ok(KlMethod::GaussianFit),
            "kde" => Ok(KlMethod::Kde),
            other => Err(Error::UnknownName {
                kind: "kl method",
                name: other.to_string(),
                valid: Self::NAMES.to_vec(),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KlMethod::GaussianFit => "gaussian-fit",
            KlMethod::Kde => "kde",
        }
    }

    /// Gaussian fit for Gaussian targets, KDE otherwise.
    pub fn default_for(target: &TargetSpec) -> Self {
        if target.as_gaussian().is_some() {
            KlMethod::GaussianFit
        } else {
            KlMethod::Kde
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlEstimate {
    pub value: f64,
    /// The fitted covariance was singular and had [`COV_RIDGE`] added.
    pub regularized: bool,
}

/// Monte-Carlo estimate of `KL(ρ_N ‖ π)` for the particle cloud `x`.
///
/// The KDE method computes `(1/N) Σ_i [ln ρ̂(X_i) + f(X_i)] + ln Ẑ`, where `ρ̂`
/// is an isotropic Gaussian KDE with median-heuristic bandwidth and `Ẑ`
/// estimates `∫ e^{-f}` by importance sampling from `ρ̂` with `seed`.
pub fn kl_estimate(x: &DMatrix<f64>, target: &TargetSpec, method: KlMethod, seed: u64) -> Result<KlEstimate> {
    if let Some(d) = target.dim() {
        check_dim("particles vs target", d, x.ncols())?;
    }
    match method {
        KlMethod::GaussianFit => {
            let g = target
                .as_gaussian()
                .ok_or_else(|| Error::Precondition("gaussian-fit KL needs a Gaussian target".into()))?;
            let (mean, mut cov) = empirical_moments(x)?;
            let mut regularized = false;
            if cov.clone().cholesky().is_none() {
                let d = cov.nrows();
                cov += DMatrix::identity(d, d) * COV_RIDGE;
                regularized = true;
            }
            Ok(KlEstimate {
                value: kl_gaussians(&mean, &cov, g)?,
                regularized,
            })
        }
        KlMethod::Kde => {
            let kde = Kde::new(x)?;
            let mut acc = 0.0;
            for i in 0..x.nrows() {
                let xi: Vec<f64> = x.row(i).iter().copied().collect();
                acc += kde.log_density(&xi) + target.potential(&xi)?;
            }
            let log_z = kde.log_normalizer(target, KDE_IS_DRAWS, seed)?;
            Ok(KlEstimate {
                value: acc / x.nrows() as f64 + log_z,
                regularized: false,
            })
        }
    }
}

/// Isotropic Gaussian KDE `ρ̂(y) = (1/N) Σ_j N(y; X_j, σ² I)`.
#[derive(Debug, Clone)]
pub struct Kde {
    points: Vec<Vec<f64>>,
    bandwidth: f64,
}

impl Kde {
    /// KDE with the median-heuristic bandwidth of `x`.
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let bandwidth = median_bandwidth(x)?;
        Ok(Self::with_bandwidth(x, bandwidth))
    }

    pub fn with_bandwidth(x: &DMatrix<f64>, bandwidth: f64) -> Self {
        Kde {
            points: x.row_iter().map(|r| r.iter().copied().collect()).collect(),
            bandwidth,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        let d = y.len() as f64;
        let n = self.points.len() as f64;
        let exponents: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                let sq: f64 = p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                -sq / (2.0 * self.bandwidth)
            })
            .collect();
        log_sum_exp(&exponents) - n.ln() - 0.5 * d * (2.0 * std::f64::consts::PI * self.bandwidth).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let j = rng.random_range(0..self.points.len());
        let s = self.bandwidth.sqrt();
        self.points[j]
            .iter()
            .map(|&c| c + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// `ln ∫ e^{-f}` by importance sampling with this KDE as proposal.
    pub fn log_normalizer(&self, target: &TargetSpec, draws: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut log_w = Vec::with_capacity(draws);
        for _ in 0..draws {
            let y = self.sample(&mut rng);
            log_w.push(-target.potential(&y)? - self.log_density(&y));
        }
        Ok(log_sum_exp(&log_w) - (draws as f64).ln())
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub iteration: usize,
    pub kl_estimate: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub grad_restart_stat: f64,
    pub mean_speed: f64,
    pub kl_regularized: bool,
}

/// Schema line written above the CSV header.
pub const METRICS_SCHEMA: &str = "# steinflow metrics v1";

impl MetricRecord {
    pub fn csv_header(d: usize) -> String {
        let mut cols = vec!["iteration".to_string(), "kl_estimate".to_string()];
        cols.extend((0..d).map(|i| format!("mean_{i}")));
        for j in 0..d {
            for i in 0..d {
                cols.push(format!("cov_{i}_{j}"));
            }
        }
        cols.extend(["grad_restart_stat", "mean_speed", "kl_regularized"].map(String::from));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.iteration.to_string(), format_float(self.kl_estimate)];
        cols.extend(self.mean.iter().map(|&v| format_float(v)));
        cols.extend(self.cov.iter().map(|&v| format_float(v)));
        cols.push(format_float(self.grad_restart_stat));
        cols.push(format_float(self.mean_speed));
        cols.push(u8::from(self.kl_regularized).to_string());
        cols.join(",")
    }

    pub fn write_csv<W: Write>(mut w: W, records: &[MetricRecord]) -> std::io::Result<()> {
        let d = records.first().map_or(0, |r| r.mean.len());
        writeln!(w, "{METRICS_SCHEMA}")?;
        writeln!(w, "{}", Self::csv_header(d))?;
        for r in records {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

/// Float with 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// First iteration whose KL estimate is at or below `threshold`.
pub fn first_below(records: &[MetricRecord], threshold: f64) -> Option<usize> {
    records.iter().find(|r| r.kl_estimate <= threshold).map(|r| r.iteration)
}

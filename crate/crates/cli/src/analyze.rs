//! `analyze`: spectra of the linearised Gaussian flows and parameter sweeps.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use steinflow::diagnostics::format_float;
use steinflow::spectral::{
    asvgd_closed_form_eigenvalues, asvgd_full_linearized_matrix, asvgd_linearized_spectrum, asvgd_rates, gamma_rate,
    numeric_eigenvalues, optimal_a_svgd, optimal_damping, svgd_linearized_matrix, AsvgdRates, GammaRate, OptimalAMode,
    SpectralReport,
};

use crate::config::{rows_of, ExperimentConfig};
use crate::experiment::{create_dir, write_file, write_manifest};
use crate::CliError;

pub const REPORT_FILE: &str = "spectral_report.json";
pub const RATE_TABLE_FILE: &str = "rate_table.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub kernel_a: Vec<Vec<f64>>,
    pub target_mean: Vec<f64>,
    pub target_cov: Vec<Vec<f64>>,
    /// Linearised SVGD at the target.
    pub svgd: SpectralReport,
    pub gamma: GammaRate,
    /// `1/(2Q + b²)` in one dimension.
    pub optimal_a_1d: Option<f64>,
    /// Damping used for the accelerated spectra.
    pub alpha: f64,
    /// `√(8 λ_min(A))`.
    pub alpha_star: f64,
    /// Centred accelerated system; present when `A` and `Q` commute.
    pub asvgd_centered: Option<SpectralReport>,
    /// Full accelerated linearisation at `(b, Q, 0, 0)`, numeric spectrum.
    pub asvgd_full: SpectralReport,
    /// Rates for `A = θ I`.
    pub rates: Option<AsvgdRates>,
}

fn commutes(a: &DMatrix<f64>, q: &DMatrix<f64>) -> bool {
    let c = a * q - q * a;
    c.norm() <= steinflow::gaussian::COMMUTE_TOL * (1.0 + a.norm() * q.norm())
}

fn scalar_theta(a: &DMatrix<f64>) -> Option<f64> {
    let theta = a[(0, 0)];
    let n = a.nrows();
    (*a == DMatrix::identity(n, n) * theta).then_some(theta)
}

pub fn analyze(cfg: &ExperimentConfig) -> Result<AnalysisReport, CliError> {
    let (b, q) = cfg.gaussian_target()?;
    let d = b.len();
    let a = cfg.kernel_matrix(d)?;
    let commuting = commutes(&a, &q);
    if cfg.sampler == "asvgd" && !commuting {
        return Err(CliError::Analysis(
            "the accelerated analysis needs commuting kernel matrix A and target covariance Q".into(),
        ));
    }
    let svgd = SpectralReport::from_eigenvalues(&numeric_eigenvalues(&svgd_linearized_matrix(&a, &b, &q)?)?)?;
    let alpha_star = optimal_damping(&a)?;
    let alpha = cfg.alpha.unwrap_or(alpha_star);
    let asvgd_centered = if commuting {
        Some(asvgd_linearized_spectrum(&a, &q, alpha)?)
    } else {
        None
    };
    let full = numeric_eigenvalues(&asvgd_full_linearized_matrix(&a, &b, &q, alpha)?)?;
    let optimal_a_1d = if d == 1 {
        Some(optimal_a_svgd(&b, &q, OptimalAMode::Scalar1d)?.a[(0, 0)])
    } else {
        None
    };
    let rates = match scalar_theta(&a) {
        Some(theta) => Some(asvgd_rates(&q, theta)?),
        None => None,
    };
    Ok(AnalysisReport {
        kernel_a: rows_of(&a),
        target_mean: b.iter().copied().collect(),
        target_cov: rows_of(&q),
        svgd,
        gamma: gamma_rate(&a, &b, &q)?,
        optimal_a_1d,
        alpha,
        alpha_star,
        asvgd_centered,
        asvgd_full: SpectralReport::from_eigenvalues(&full)?,
        rates,
    })
}

/// Log-spaced grid over two decades centred on `center`.
pub fn log_grid(center: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| center * 10f64.powf(-1.0 + 2.0 * i as f64 / (points - 1) as f64))
        .collect()
}

/// `rate_table.csv` contents. Sweeping `a` scales the kernel matrix (in one
/// dimension the grid is centred on the optimal `A`); sweeping `alpha` varies
/// the damping of the centred accelerated system around `α*`.
pub fn rate_table(cfg: &ExperimentConfig, report: &AnalysisReport) -> Result<String, CliError> {
    let (b, q) = cfg.gaussian_target()?;
    let a = cfg.kernel_matrix(b.len())?;
    let mut out = String::new();
    match cfg.rate_sweep.as_str() {
        "a" => {
            out.push_str("scale,a_min,svgd_spectral_abscissa,svgd_condition_number,svgd_optimal_step,gamma\n");
            let center = report.optimal_a_1d.map_or(1.0, |opt| opt / a[(0, 0)]);
            for s in log_grid(center, cfg.sweep_points) {
                let sa = &a * s;
                let r = SpectralReport::from_eigenvalues(&numeric_eigenvalues(&svgd_linearized_matrix(&sa, &b, &q)?)?)?;
                let g = gamma_rate(&sa, &b, &q)?;
                let a_min = sa.clone().symmetric_eigenvalues().min();
                out.push_str(&row(&[
                    s,
                    a_min,
                    r.spectral_abscissa,
                    r.condition_number,
                    r.optimal_step,
                    g.gamma,
                ]));
            }
        }
        _ => {
            if report.asvgd_centered.is_none() {
                return Err(CliError::Analysis("the damping sweep needs commuting A and Q".into()));
            }
            out.push_str("alpha,spectral_abscissa,condition_number,optimal_step,euler_spectral_radius\n");
            for alpha in log_grid(report.alpha_star, cfg.sweep_points) {
                let r = SpectralReport::from_eigenvalues(&asvgd_closed_form_eigenvalues(&a, &q, alpha)?)?;
                out.push_str(&row(&[
                    alpha,
                    r.spectral_abscissa,
                    r.condition_number,
                    r.optimal_step,
                    r.euler_spectral_radius,
                ]));
            }
        }
    }
    Ok(out)
}

fn row(values: &[f64]) -> String {
    let mut s = values.iter().map(|&v| format_float(v)).collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

/// Writes the report, the rate table and a manifest to `cfg.output_dir`.
pub fn analyze_to_dir(cfg: &ExperimentConfig) -> Result<AnalysisReport, CliError> {
    let report = analyze(cfg)?;
    let table = rate_table(cfg, &report)?;
    let dir: &Path = &cfg.output_dir;
    create_dir(dir)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&dir.join(REPORT_FILE), json.as_bytes())?;
    write_file(&dir.join(RATE_TABLE_FILE), table.as_bytes())?;
    write_manifest(dir, "analyze", cfg, vec![REPORT_FILE.into(), RATE_TABLE_FILE.into()])?;
    Ok(report)
}

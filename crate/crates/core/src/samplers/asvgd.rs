use nalgebra::DMatrix;

use super::config::{DampingSchedule, SamplerConfig};
use super::ensemble::ParticleEnsemble;
use super::restart::{damping_coefficients, gradient_restart_trace};
use super::{ensure_finite, scale_rows};
use crate::error::{check_dim, Result};
use crate::kernels::{regularized_inverse_apply, GramMatrix, KernelSpec};

/// Diagnostics produced by one accelerated SVGD step.
#[derive(Debug, Clone, PartialEq)]
pub struct AsvgdStepInfo {
    /// Mean of `|X_i^{k+1} - X_i^k|` over particles.
    pub mean_speed: f64,
    /// Value of the gradient restart test; `None` unless it was evaluated.
    pub restart_trace: Option<f64>,
    pub gradient_restarted: bool,
    /// Number of particles whose counter was reset by the speed restart.
    pub speed_restarts: usize,
    /// Damping coefficients used for the momentum update.
    pub damping: Vec<f64>,
}

/// One step of accelerated SVGD, updating `ens` in place.
///
/// The ensemble is left untouched when an error is returned.
pub fn asvgd_step(ens: &mut ParticleEnsemble, cfg: &SamplerConfig) -> Result<AsvgdStepInfo> {
    ens.validate()?;
    if let Some(d) = cfg.kernel.dim() {
        check_dim("ensemble dimension", d, ens.dim())?;
    }
    let n = ens.len();
    let nf = n as f64;
    let sqrt_tau = cfg.step_size.sqrt();
    let iteration = ens.iteration + 1;

    let positions = &ens.positions + &ens.momenta * sqrt_tau;
    ensure_finite(&positions, iteration)?;
    let step_norms: Vec<f64> = ens.momenta.row_iter().map(|r| r.norm() * sqrt_tau).collect();

    let gram = GramMatrix::new(cfg.kernel.clone(), &positions)?;
    let v = regularized_inverse_apply(&gram, cfg.regularization, &ens.momenta, n)?;
    let grad = cfg.target.grad_matrix(&positions)?;

    let mut counts = ens.restart_count.clone();
    let mut speed_restarts = 0;
    let mut restart_trace = None;
    let mut gradient_restarted = false;
    if let DampingSchedule::RestartNesterov {
        speed_restart,
        gradient_restart,
        ..
    } = cfg.damping
    {
        for (i, c) in counts.iter_mut().enumerate() {
            if speed_restart && ens.has_history && step_norms[i] < ens.prev_step_norms[i] {
                *c = 1;
                speed_restarts += 1;
            } else {
                *c += 1;
            }
        }
        if gradient_restart && cfg.kernel.is_gaussian() {
            let t = gradient_restart_trace(&gram, &v, &grad, cfg.restart_literal);
            restart_trace = Some(t);
            let energy_rising = if cfg.restart_literal { t < 0.0 } else { t > 0.0 };
            if energy_rising {
                counts.iter_mut().for_each(|c| *c = 1);
                gradient_restarted = true;
            }
        }
    }
    let alpha = damping_coefficients(&cfg.damping, &counts);

    let mut momenta = ens.momenta.clone();
    scale_rows(&mut momenta, &alpha);
    let kg = &gram.k * &grad;
    momenta -= kg * (sqrt_tau / nf);
    match &cfg.kernel {
        KernelSpec::Bilinear { a } => {
            let interaction = if cfg.include_interaction {
                v.dot(&(&gram.k * &v)) / (nf * nf)
            } else {
                0.0
            };
            momenta += &positions * a * (sqrt_tau * (1.0 + interaction));
        }
        KernelSpec::Gaussian { bandwidth } => {
            let drift = gaussian_interaction(&gram.k, &positions, &v, cfg.include_interaction);
            momenta += drift * (sqrt_tau / (nf * nf * bandwidth));
        }
    }
    ensure_finite(&momenta, iteration)?;
    ensure_finite(&v, iteration)?;

    let mean_speed = if n == 0 {
        0.0
    } else {
        step_norms.iter().sum::<f64>() / nf
    };
    ens.positions = positions;
    ens.momenta = momenta;
    ens.density_momenta = v;
    ens.restart_count = counts;
    ens.prev_step_norms = step_norms;
    ens.has_history = true;
    ens.iteration = iteration;
    Ok(AsvgdStepInfo {
        mean_speed,
        restart_trace,
        gradient_restarted,
        speed_restarts,
        damping: alpha,
    })
}

/// `(diag(W1) - W) X` with `W = N K + K((VVᵀ)∘K) - K∘(K V Vᵀ)`, evaluated
/// without forming any `N × N` product of two `N × N` matrices.
fn gaussian_interaction(
    k: &DMatrix<f64>,
    x: &DMatrix<f64>,
    v: &DMatrix<f64>,
    include_interaction: bool,
) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut b = DMatrix::from_element(n, d + 1, 1.0);
    b.view_mut((0, 0), (n, d)).copy_from(x);

    let mut wb = k * &b * n as f64;
    if include_interaction {
        let gram_v = v * v.transpose();
        let weighted = gram_v.component_mul(k);
        wb += k * (weighted * &b);
        let kv = k * v;
        let cross = (kv * v.transpose()).component_mul(k);
        wb -= cross * &b;
    }

    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        let row_sum = wb[(i, d)];
        for j in 0..d {
            out[(i, j)] = row_sum * x[(i, j)] - wb[(i, j)];
        }
    }
    out
}

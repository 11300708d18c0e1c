//! Mean-field SVGD and accelerated SVGD restricted to Gaussian densities,
//! for a Gaussian target `N(b, Q)` and the bilinear kernel `K(x, y) = xᵀAy + 1`.
//!
//! A Gaussian `N(μ, Σ)` stays Gaussian under both flows. The accelerated flow
//! additionally carries a momentum `(ν, S)` dual to `(μ, Σ)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::format_float;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, sym};
use crate::targets::GaussianTarget;

/// Relative commutator tolerance for the closed-form covariance path.
pub const COMMUTE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceleratedGaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub nu: DVector<f64>,
    pub s: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim("gaussian state", mean.len(), cov.nrows())?;
        linalg::check_spd("Σ", &cov)?;
        Ok(GaussianState { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn axpy(&self, h: f64, d: &GaussianState) -> GaussianState {
        GaussianState {
            mean: &self.mean + &d.mean * h,
            cov: sym(&(&self.cov + &d.cov * h)),
        }
    }
}

impl AcceleratedGaussianState {
    /// State at rest: `ν = 0`, `S = 0`.
    pub fn at_rest(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        check_dim("gaussian state", d, cov.nrows())?;
        linalg::check_spd("Σ", &cov)?;
        Ok(AcceleratedGaussianState {
            mean,
            cov,
            nu: DVector::zeros(d),
            s: DMatrix::zeros(d, d),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn position(&self) -> GaussianState {
        GaussianState {
            mean: self.mean.clone(),
            cov: self.cov.clone(),
        }
    }

    fn axpy(&self, h: f64, d: &AcceleratedGaussianState) -> AcceleratedGaussianState {
        AcceleratedGaussianState {
            mean: &self.mean + &d.mean * h,
            cov: sym(&(&self.cov + &d.cov * h)),
            nu: &self.nu + &d.nu * h,
            s: sym(&(&self.s + &d.s * h)),
        }
    }
}

fn check_problem(d: usize, a: &DMatrix<f64>, target: &GaussianTarget) -> Result<()> {
    check_dim("kernel matrix A", d, a.nrows())?;
    check_dim("target dimension", d, target.mean.len())
}

fn kernel_at(a: &DMatrix<f64>, mu: &DVector<f64>) -> f64 {
    mu.dot(&(a * mu)) + 1.0
}

/// Right-hand side of mean-field SVGD on Gaussians:
///
/// `μ̇ = (I - Q⁻¹Σ) A μ - K(μ, μ) Q⁻¹ (μ - b)`,
/// `Σ̇ = 2 Sym(ΣA) - 2 Sym(ΣA (Σ + μ(μ - b)ᵀ) Q⁻¹)`.
pub fn svgd_gaussian_rhs(state: &GaussianState, a: &DMatrix<f64>, target: &GaussianTarget) -> Result<GaussianState> {
    let d = state.dim();
    check_problem(d, a, target)?;
    let qi = &target.precision;
    let mu = &state.mean;
    let sigma = &state.cov;
    let r = mu - &target.mean;
    let eye = DMatrix::<f64>::identity(d, d);
    let dmu = (&eye - qi * sigma) * (a * mu) - qi * &r * kernel_at(a, mu);
    let sa = sigma * a;
    let dsigma = sym(&sa) * 2.0 - sym(&(&sa * (sigma + mu * r.transpose()) * qi)) * 2.0;
    Ok(GaussianState { mean: dmu, cov: dsigma })
}

/// Right-hand side of accelerated SVGD on Gaussians with damping `α`:
///
/// `μ̇ = 2SΣAμ + K(μ, μ) ν`,
/// `Σ̇ = νμᵀAΣ + ΣAμνᵀ + 2ΣAΣS + 2SΣAΣ`,
/// `ν̇ = -αν - 2AΣSν - Aμ|ν|² - Q⁻¹(μ - b)`,
/// `Ṡ = -αS - 2 Sym(SνμᵀA) - 4 Sym(S²ΣA) - ½(Q⁻¹ - Σ⁻¹)`.
///
/// These are Hamilton's equations for [`hamiltonian`] with friction `α`,
/// with the matrix components projected onto symmetric matrices.
pub fn asvgd_gaussian_rhs(
    state: &AcceleratedGaussianState,
    a: &DMatrix<f64>,
    target: &GaussianTarget,
    alpha: f64,
) -> Result<AcceleratedGaussianState> {
    let d = state.dim();
    check_problem(d, a, target)?;
    let qi = &target.precision;
    let mu = &state.mean;
    let sigma = &state.cov;
    let nu = &state.nu;
    let s = &state.s;
    let sigma_inv = linalg::spd_inverse("Σ", sigma)?;
    let a_mu = a * mu;
    let sa = sigma * a;

    let dmu = s * (&sa * mu) * 2.0 + nu * kernel_at(a, mu);

    let nu_mu_a_sigma = nu * (sigma * &a_mu).transpose();
    let sasig_s = &sa * sigma * s;
    let dsigma = sym(&(&nu_mu_a_sigma * 2.0 + &sasig_s * 4.0));

    let dnu = -nu * alpha - a * (sigma * (s * nu)) * 2.0 - &a_mu * nu.norm_squared() - qi * (mu - &target.mean);

    let s_nu_mu_a = s * nu * a_mu.transpose();
    let dsm = -s * alpha - sym(&s_nu_mu_a) * 2.0 - sym(&(s * s * &sa)) * 4.0 - (qi - sigma_inv) * 0.5;

    Ok(AcceleratedGaussianState {
        mean: dmu,
        cov: dsigma,
        nu: dnu,
        s: sym(&dsm),
    })
}

/// Damping schedule for the accelerated ODE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeDamping {
    Constant(f64),
    /// `α(t) = r / t`, evaluated at `max(t, dt)` near the origin.
    Nesterov {
        r: f64,
    },
}

impl OdeDamping {
    pub fn at(&self, t: f64, dt: f64) -> f64 {
        match *self {
            OdeDamping::Constant(a) => a,
            OdeDamping::Nesterov { r } => r / t.max(dt),
        }
    }
}

fn check_time(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: format!("must be nonnegative, got {t_end}"),
        });
    }
    Ok((t_end / dt).round() as usize)
}

fn check_pd(cov: &DMatrix<f64>, time: f64) -> Result<()> {
    if cov.iter().all(|v| v.is_finite()) && cov.clone().cholesky().is_some() {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite { time })
    }
}

/// Classical RK4 for the SVGD Gaussian flow. Returns `(t, state)` for
/// `t = 0, dt, …, n dt` with `n = round(t_end / dt)`.
pub fn integrate_svgd(
    initial: &GaussianState,
    a: &DMatrix<f64>,
    target: &GaussianTarget,
    t_end: f64,
    dt: f64,
) -> Result<Vec<(f64, GaussianState)>> {
    let steps = check_time(t_end, dt)?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = initial.clone();
    out.push((0.0, x.clone()));
    for k in 0..steps {
        let k1 = svgd_gaussian_rhs(&x, a, target)?;
        let k2 = svgd_gaussian_rhs(&x.axpy(dt / 2.0, &k1), a, target)?;
        let k3 = svgd_gaussian_rhs(&x.axpy(dt / 2.0, &k2), a, target)?;
        let k4 = svgd_gaussian_rhs(&x.axpy(dt, &k3), a, target)?;
        x = x
            .axpy(dt / 6.0, &k1)
            .axpy(dt / 3.0, &k2)
            .axpy(dt / 3.0, &k3)
            .axpy(dt / 6.0, &k4);
        let t = (k + 1) as f64 * dt;
        check_pd(&x.cov, t)?;
        out.push((t, x.clone()));
    }
    Ok(out)
}

/// Classical RK4 for the accelerated Gaussian flow, symmetrising `Σ` and `S`
/// at every stage.
pub fn integrate_asvgd(
    initial: &AcceleratedGaussianState,
    a: &DMatrix<f64>,
    target: &GaussianTarget,
    damping: OdeDamping,
    t_end: f64,
    dt: f64,
) -> Result<Vec<(f64, AcceleratedGaussianState)>> {
    let steps = check_time(t_end, dt)?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = initial.clone();
    out.push((0.0, x.clone()));
    let rhs = |s: &AcceleratedGaussianState, t: f64| -> Result<AcceleratedGaussianState> {
        check_pd(&s.cov, t)?;
        asvgd_gaussian_rhs(s, a, target, damping.at(t, dt)).map_err(|e| match e {
            Error::NotSpd { .. } => Error::NotPositiveDefinite { time: t },
            other => other,
        })
    };
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = rhs(&x, t)?;
        let k2 = rhs(&x.axpy(dt / 2.0, &k1), t + dt / 2.0)?;
        let k3 = rhs(&x.axpy(dt / 2.0, &k2), t + dt / 2.0)?;
        let k4 = rhs(&x.axpy(dt, &k3), t + dt)?;
        x = x
            .axpy(dt / 6.0, &k1)
            .axpy(dt / 3.0, &k2)
            .axpy(dt / 3.0, &k3)
            .axpy(dt / 6.0, &k4);
        let t_next = (k + 1) as f64 * dt;
        check_pd(&x.cov, t_next)?;
        out.push((t_next, x.clone()));
    }
    Ok(out)
}

/// Closed-form covariance of the centred SVGD flow,
/// `Σ_t⁻¹ = Q⁻¹ + e^{-2tA} (Σ₀⁻¹ - Q⁻¹)`.
///
/// Requires `A`, `Q` and `Σ₀` to commute pairwise.
pub fn closed_form_sigma(sigma0: &DMatrix<f64>, a: &DMatrix<f64>, q: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let d = sigma0.nrows();
    check_dim("A", d, a.nrows())?;
    check_dim("Q", d, q.nrows())?;
    let scale = |x: &DMatrix<f64>, y: &DMatrix<f64>| COMMUTE_TOL * (1.0 + x.norm() * y.norm());
    for (x, y, what) in [(a, q, "A and Q"), (a, sigma0, "A and Σ₀"), (q, sigma0, "Q and Σ₀")] {
        if linalg::commutator_norm(x, y) > scale(x, y) {
            return Err(Error::Precondition(format!(
                "closed form needs commuting matrices: {what} do not commute"
            )));
        }
    }
    let qi = linalg::spd_inverse("Q", q)?;
    let si = linalg::spd_inverse("Σ₀", sigma0)?;
    let decay = linalg::sym_apply(a, |l| (-2.0 * t * l).exp());
    let prec = sym(&(&qi + decay * (si - &qi)));
    linalg::spd_inverse("Σ_t⁻¹", &prec)
}

/// `KL(N(μ, Σ) ‖ N(b, Q))`.
pub fn kl_gaussians(mean: &DVector<f64>, cov: &DMatrix<f64>, target: &GaussianTarget) -> Result<f64> {
    let d = mean.len();
    check_dim("KL arguments", target.mean.len(), d)?;
    check_dim("KL arguments", d, cov.nrows())?;
    let r = &target.mean - mean;
    let trace = (&target.precision * cov).trace();
    let quad = r.dot(&(&target.precision * &r));
    let log_det = linalg::spd_log_det("Σ", cov)?;
    Ok(0.5 * (trace - d as f64 + quad + target.log_det_cov - log_det))
}

/// Gradient of the KL divergence: `(Q⁻¹(μ - b), ½(Q⁻¹ - Σ⁻¹))`.
pub fn kl_gradient(state: &GaussianState, target: &GaussianTarget) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let si = linalg::spd_inverse("Σ", &state.cov)?;
    let gm = &target.precision * (&state.mean - &target.mean);
    let gs = (&target.precision - si) * 0.5;
    Ok((gm, gs))
}

/// Inverse of the Stein metric on Gaussians applied to a cotangent `(ν, S)`:
/// `(2SΣAμ + K(μ, μ)ν, 2 Sym(ΣA(2ΣS + μνᵀ)))`.
pub fn stein_metric_inverse(
    state: &GaussianState,
    a: &DMatrix<f64>,
    nu: &DVector<f64>,
    s: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let mu = &state.mean;
    let sa = &state.cov * a;
    let dmu = s * (&sa * mu) * 2.0 + nu * kernel_at(a, mu);
    let dsigma = sym(&(&sa * (&state.cov * s * 2.0 + mu * nu.transpose()))) * 2.0;
    (dmu, dsigma)
}

/// Hamiltonian `½⟨(ν, S), G⁻¹(ν, S)⟩ + KL` of the accelerated flow.
pub fn hamiltonian(state: &AcceleratedGaussianState, a: &DMatrix<f64>, target: &GaussianTarget) -> Result<f64> {
    Ok(kinetic_energy(state, a)? + kl_gaussians(&state.mean, &state.cov, target)?)
}

/// Kinetic part `½⟨(ν, S), G⁻¹(ν, S)⟩`.
pub fn kinetic_energy(state: &AcceleratedGaussianState, a: &DMatrix<f64>) -> Result<f64> {
    check_dim("kernel matrix A", state.dim(), a.nrows())?;
    let (dmu, dsigma) = stein_metric_inverse(&state.position(), a, &state.nu, &state.s);
    Ok(0.5 * (state.nu.dot(&dmu) + (&state.s * dsigma).trace()))
}

/// Wasserstein gradient flow of the KL divergence on Gaussians:
/// `μ̇ = -Q⁻¹(μ - b)`, `Σ̇ = 2I - 2 Sym(ΣQ⁻¹)`.
pub fn wasserstein_gaussian_rhs(state: &GaussianState, target: &GaussianTarget) -> Result<GaussianState> {
    let d = state.dim();
    check_dim("target dimension", d, target.mean.len())?;
    let qi = &target.precision;
    Ok(GaussianState {
        mean: -(qi * (&state.mean - &target.mean)),
        cov: DMatrix::identity(d, d) * 2.0 - sym(&(&state.cov * qi)) * 2.0,
    })
}

/// Writes an accelerated trajectory as CSV with columns
/// `t, mu_*, sigma_* (column-major), nu_*, s_*, kl, hamiltonian`.
pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    traj: &[(f64, AcceleratedGaussianState)],
    a: &DMatrix<f64>,
    target: &GaussianTarget,
) -> std::io::Result<()> {
    let d = target.mean.len();
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("mu_{i}")));
    header.extend((0..d * d).map(|i| format!("sigma_{i}")));
    header.extend((0..d).map(|i| format!("nu_{i}")));
    header.extend((0..d * d).map(|i| format!("s_{i}")));
    header.push("kl".into());
    header.push("hamiltonian".into());
    writeln!(w, "{}", header.join(","))?;
    for (t, s) in traj {
        let kl = kl_gaussians(&s.mean, &s.cov, target).unwrap_or(f64::NAN);
        let h = hamiltonian(s, a, target).unwrap_or(f64::NAN);
        let mut fields = vec![format_float(*t)];
        for v in s.mean.iter().chain(s.cov.iter()).chain(s.nu.iter()).chain(s.s.iter()) {
            fields.push(format_float(*v));
        }
        fields.push(format_float(kl));
        fields.push(format_float(h));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::TargetSpec;

    fn target(b: &[f64], q: DMatrix<f64>) -> GaussianTarget {
        TargetSpec::gaussian(DVector::from_column_slice(b), q)
            .unwrap()
            .as_gaussian()
            .unwrap()
            .clone()
    }

    #[test]
    fn target_is_a_fixed_point() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let t = target(&[0.5, -1.0], q.clone());
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]);
        let st = GaussianState::new(t.mean.clone(), q.clone()).unwrap();
        let r = svgd_gaussian_rhs(&st, &a, &t).unwrap();
        assert!(r.mean.norm() < 1e-12 && r.cov.norm() < 1e-12);
        let acc = AcceleratedGaussianState::at_rest(t.mean.clone(), q).unwrap();
        let r = asvgd_gaussian_rhs(&acc, &a, &t, 1.0).unwrap();
        assert!(r.mean.norm() < 1e-12 && r.cov.norm() < 1e-12 && r.nu.norm() < 1e-12 && r.s.norm() < 1e-12);
    }

    #[test]
    fn metric_inverse_of_kl_gradient_is_svgd_flow() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let t = target(&[0.5, -1.0], q);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]);
        let st = GaussianState::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, -0.1, -0.1, 3.0]),
        )
        .unwrap();
        let (gm, gs) = kl_gradient(&st, &t).unwrap();
        let (dm, ds) = stein_metric_inverse(&st, &a, &gm, &gs);
        let r = svgd_gaussian_rhs(&st, &a, &t).unwrap();
        assert!((dm + &r.mean).norm() < 1e-12);
        assert!((ds + &r.cov).norm() < 1e-12);
    }

    #[test]
    fn kl_of_target_is_zero() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let t = target(&[0.5, -1.0], q.clone());
        assert!(kl_gaussians(&t.mean, &q, &t).unwrap().abs() < 1e-14);
    }

    #[test]
    fn kl_one_dimensional_example() {
        let t = target(&[0.0], DMatrix::from_element(1, 1, 1.0));
        let kl = kl_gaussians(&DVector::from_element(1, 1.0), &DMatrix::from_element(1, 1, 2.0), &t).unwrap();
        let expected = 0.5 * (2.0 - 1.0 + 1.0 - 2f64.ln());
        assert!((kl - expected).abs() < 1e-15);
    }

    #[test]
    fn closed_form_rejects_non_commuting() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let s = DMatrix::identity(2, 2);
        assert!(matches!(
            closed_form_sigma(&s, &a, &q, 1.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn closed_form_matches_scalar_formula() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let q = DMatrix::from_element(1, 1, 2.0);
        let s0 = DMatrix::from_element(1, 1, 0.25);
        let t = 1.3;
        let p = 0.5 + (-2.0 * t * 0.5f64).exp() * (4.0 - 0.5);
        let s = closed_form_sigma(&s0, &a, &q, t).unwrap();
        assert!((s[(0, 0)] - 1.0 / p).abs() < 1e-14);
    }

    #[test]
    fn nesterov_damping_is_capped_at_origin() {
        let d = OdeDamping::Nesterov { r: 3.0 };
        assert_eq!(d.at(0.0, 0.01), 300.0);
        assert_eq!(d.at(3.0, 0.01), 1.0);
    }
}

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::targets::TargetSpec;

use super::ensure_finite;

fn check_tau(tau: f64, allow_zero: bool) -> Result<()> {
    let ok = tau.is_finite() && (tau > 0.0 || (allow_zero && tau == 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("invalid step size {tau}"),
        })
    }
}

fn gaussian_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut xi = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            xi[(i, j)] = rng.sample(StandardNormal);
        }
    }
    xi
}

/// Unadjusted Langevin step `x ← x - τ ∇f(x) + √(2τ) ξ` for every row.
pub fn ula_step<R: Rng + ?Sized>(
    x: &mut DMatrix<f64>,
    target: &TargetSpec,
    tau: f64,
    rng: &mut R,
    iteration: usize,
) -> Result<()> {
    check_tau(tau, true)?;
    let grad = target.grad_matrix(x)?;
    let xi = gaussian_noise(x.nrows(), x.ncols(), rng);
    let next = &*x - grad * tau + xi * (2.0 * tau).sqrt();
    ensure_finite(&next, iteration)?;
    *x = next;
    Ok(())
}

/// Metropolis-adjusted Langevin step. Returns the per-particle acceptance flags.
pub fn mala_step<R: Rng + ?Sized>(
    x: &mut DMatrix<f64>,
    target: &TargetSpec,
    tau: f64,
    rng: &mut R,
    iteration: usize,
) -> Result<Vec<bool>> {
    check_tau(tau, false)?;
    let (n, d) = x.shape();
    let mut accepted = Vec::with_capacity(n);
    for i in 0..n {
        let xi: DVector<f64> = x.row(i).transpose();
        let gx = target.grad_potential(xi.as_slice())?;
        let fx = target.potential(xi.as_slice())?;
        let noise = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &xi - &gx * tau + noise * (2.0 * tau).sqrt();
        let fy = target.potential(y.as_slice())?;
        let gy = target.grad_potential(y.as_slice())?;
        // log q(a | b) = -|a - b + τ ∇f(b)|² / (4τ)
        let log_q_xy = -(&xi - &y + &gy * tau).norm_squared() / (4.0 * tau);
        let log_q_yx = -(&y - &xi + &gx * tau).norm_squared() / (4.0 * tau);
        let log_ratio = -fy + fx + log_q_xy - log_q_yx;
        let u: f64 = rng.random();
        let accept = log_ratio >= 0.0 || u.ln() < log_ratio;
        if accept {
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { iteration });
            }
            x.row_mut(i).copy_from(&y.transpose());
        }
        accepted.push(accept);
    }
    Ok(accepted)
}

/// Underdamped Langevin step (Euler–Maruyama, unit friction):
/// `P ← P - τ(∇f(X) + P) + √(2τ) ξ`, then `X ← X + τ P`.
pub fn uld_step<R: Rng + ?Sized>(
    x: &mut DMatrix<f64>,
    p: &mut DMatrix<f64>,
    target: &TargetSpec,
    tau: f64,
    rng: &mut R,
    iteration: usize,
) -> Result<()> {
    check_tau(tau, true)?;
    check_dim("velocity rows", x.nrows(), p.nrows())?;
    check_dim("velocity cols", x.ncols(), p.ncols())?;
    let grad = target.grad_matrix(x)?;
    let xi = gaussian_noise(x.nrows(), x.ncols(), rng);
    let p_next = &*p - (grad + &*p) * tau + xi * (2.0 * tau).sqrt();
    let x_next = &*x + &p_next * tau;
    ensure_finite(&p_next, iteration)?;
    ensure_finite(&x_next, iteration)?;
    *p = p_next;
    *x = x_next;
    Ok(())
}

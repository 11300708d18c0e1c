use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::kernels::{GramMatrix, KernelSpec};
use crate::targets::TargetSpec;

use super::ensure_finite;

/// SVGD velocity field for the Gaussian kernel,
/// `(1/N)[(1/σ²)(diag(K1) - K) X - K ∇f(X)]`.
///
/// With `literal = true` the `1/σ²` moves to the driving term:
/// `(1/N)(diag(K1) - K) X - (1/(N σ²)) K ∇f(X)`.
pub fn svgd_direction_gaussian(
    x: &DMatrix<f64>,
    bandwidth: f64,
    target: &TargetSpec,
    literal: bool,
) -> Result<DMatrix<f64>> {
    let kernel = KernelSpec::gaussian(bandwidth)?;
    let gram = GramMatrix::new(kernel, x)?;
    let grad = target.grad_matrix(x)?;
    let n = x.nrows() as f64;
    let row_sums = gram.row_sums();
    let mut repulsion = -(&gram.k * x);
    for i in 0..x.nrows() {
        let s = row_sums[i];
        for j in 0..x.ncols() {
            repulsion[(i, j)] += s * x[(i, j)];
        }
    }
    let driving = &gram.k * grad;
    Ok(if literal {
        repulsion / n - driving / (n * bandwidth)
    } else {
        (repulsion / bandwidth - driving) / n
    })
}

/// SVGD velocity field for the bilinear kernel, `(1/N)(N X A - K ∇f(X))`.
pub fn svgd_direction_bilinear(x: &DMatrix<f64>, a: &DMatrix<f64>, target: &TargetSpec) -> Result<DMatrix<f64>> {
    check_dim("bilinear kernel dimension", a.nrows(), x.ncols())?;
    let kernel = KernelSpec::Bilinear { a: a.clone() };
    let gram = GramMatrix::new(kernel, x)?;
    let grad = target.grad_matrix(x)?;
    let n = x.nrows() as f64;
    Ok(x * a - (&gram.k * grad) / n)
}

/// `X ← X + τ φ(X)` with the Gaussian-kernel field.
pub fn svgd_step_gaussian(
    x: &mut DMatrix<f64>,
    bandwidth: f64,
    target: &TargetSpec,
    tau: f64,
    literal: bool,
    iteration: usize,
) -> Result<()> {
    check_tau(tau)?;
    let next = &*x + svgd_direction_gaussian(x, bandwidth, target, literal)? * tau;
    ensure_finite(&next, iteration)?;
    *x = next;
    Ok(())
}

/// `X ← X + τ φ(X)` with the bilinear-kernel field.
pub fn svgd_step_bilinear(
    x: &mut DMatrix<f64>,
    a: &DMatrix<f64>,
    target: &TargetSpec,
    tau: f64,
    iteration: usize,
) -> Result<()> {
    check_tau(tau)?;
    let next = &*x + svgd_direction_bilinear(x, a, target)? * tau;
    ensure_finite(&next, iteration)?;
    *x = next;
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("step size must be positive, got {tau}"),
        })
    }
}

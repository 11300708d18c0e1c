use nalgebra::DMatrix;

use super::config::DampingSchedule;
use super::ensemble::ParticleEnsemble;
use crate::error::Result;
use crate::kernels::{GramMatrix, KernelSpec};
use crate::targets::TargetSpec;

/// Matrix form of the gradient-restart test,
/// `tr(Vᵀ(σ² K∇f(X) + (K - diag(K1)) X))` for the Gaussian kernel.
///
/// It equals `N² σ²` times [`gradient_restart_stat`], so both have the same sign.
/// With `literal = true` the `σ²` on the first term is dropped.
pub fn gradient_restart_trace(gram: &GramMatrix, v: &DMatrix<f64>, grad: &DMatrix<f64>, literal: bool) -> f64 {
    let x = &gram.points;
    let scale = match (&gram.kernel, literal) {
        (KernelSpec::Gaussian { bandwidth }, false) => *bandwidth,
        _ => 1.0,
    };
    let row_sums = gram.row_sums();
    let mut laplacian_x = &gram.k * x;
    for i in 0..x.nrows() {
        let s = row_sums[i];
        for j in 0..x.ncols() {
            laplacian_x[(i, j)] -= s * x[(i, j)];
        }
    }
    let driving = &gram.k * grad * scale + laplacian_x;
    v.dot(&driving)
}

/// Gradient restart statistic
/// `(1/N²) Σ_{i,j} ⟨V_j, K(X_i, X_j) ∇f(X_i) - ∇₂K(X_j, X_i)⟩`.
///
/// This is the time derivative of the KL energy along the particle velocities
/// `Y = K V / N`. A positive value means the energy is increasing.
pub fn gradient_restart_stat(ens: &ParticleEnsemble, kernel: &KernelSpec, target: &TargetSpec) -> Result<f64> {
    let n = ens.len() as f64;
    let gram = kernel.gram(&ens.positions)?;
    let grad = target.grad_matrix(&ens.positions)?;
    let v = &ens.density_momenta;
    Ok(match kernel {
        KernelSpec::Gaussian { bandwidth } => gradient_restart_trace(&gram, v, &grad, false) / (n * n * bandwidth),
        KernelSpec::Bilinear { a } => {
            // ∇₂K(X_j, X_i) = A X_j does not depend on i.
            let energy = v.dot(&(&gram.k * &grad));
            let repulsion = v.dot(&(&ens.positions * a)) * n;
            (energy - repulsion) / (n * n)
        }
    })
}

/// Per-particle damping coefficients for the current counters.
pub fn damping_coefficients(schedule: &DampingSchedule, restart_count: &[u64]) -> Vec<f64> {
    match *schedule {
        DampingSchedule::Constant(beta) => vec![beta; restart_count.len()],
        DampingSchedule::RestartNesterov { offset, .. } => restart_count
            .iter()
            .map(|&c| {
                let c = c as f64;
                (c - 1.0) / (c + offset - 1.0)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn nesterov_coefficients() {
        let s = DampingSchedule::default();
        let a = damping_coefficients(&s, &[1, 2, 4]);
        assert_eq!(a, vec![0.0, 0.25, 0.5]);
        assert_eq!(
            damping_coefficients(&DampingSchedule::Constant(0.9), &[1, 7]),
            vec![0.9, 0.9]
        );
    }

    #[test]
    fn zero_density_momentum_gives_zero_stat() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, -1.0, 0.5, 0.2]);
        let ens = ParticleEnsemble::new(x);
        let t = TargetSpec::gaussian(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let k = KernelSpec::gaussian(0.5).unwrap();
        assert_eq!(gradient_restart_stat(&ens, &k, &t).unwrap(), 0.0);
    }

    #[test]
    fn single_particle_at_mean_gives_zero_stat() {
        let t = TargetSpec::gaussian(DVector::from_vec(vec![0.3, -0.2]), DMatrix::identity(2, 2)).unwrap();
        let mut ens = ParticleEnsemble::new(DMatrix::from_row_slice(1, 2, &[0.3, -0.2]));
        ens.density_momenta = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
        for k in [
            KernelSpec::gaussian(0.5).unwrap(),
            KernelSpec::bilinear(DMatrix::identity(2, 2)).unwrap(),
        ] {
            let s = gradient_restart_stat(&ens, &k, &t).unwrap();
            if k.is_gaussian() {
                assert_eq!(s, 0.0);
            } else {
                // The bilinear kernel keeps the −⟨V, A X⟩ term for a single particle.
                assert!((s - (-(0.3 * 1.0 + 0.4))).abs() < 1e-14);
            }
        }
    }
}

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use steinflow::{KernelSpec, TargetSpec};

pub fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random SPD matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = normal_matrix(rng, d, d).qr().q();
    let eig = DVector::from_fn(d, |_, _| rng.random_range(lo..hi));
    let m = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Solves `M z = y` column by column with partial-pivot LU.
fn lu_solve(m: DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    m.lu().solve(y).expect("oracle system is nonsingular")
}

/// One accelerated step written as explicit sums over particles:
///
/// X_j ← X_j + √τ Y_j,
/// V = N (K + εI)⁻¹ Y,
/// Y_j ← α_j Y_j + (√τ/N) Σ_i [∇₂K(X_j, X_i) − K_ji ∇f(X_i)]
///       + (√τ/N²) Σ_{i,l} ⟨V_i, V_l⟩ [K_il ∇₂K(X_j, X_i) + K_jl ∇₁K(X_j, X_i) − K_ji ∇₂K(X_l, X_i)].
pub fn asvgd_step_double_sum(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    kernel: &KernelSpec,
    target: &TargetSpec,
    tau: f64,
    eps: f64,
    alpha: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (n, d) = x.shape();
    let nf = n as f64;
    let st = tau.sqrt();
    let mut xn = x.clone();
    for i in 0..n {
        for k in 0..d {
            xn[(i, k)] += st * y[(i, k)];
        }
    }
    let pts: Vec<Vec<f64>> = (0..n).map(|i| row(&xn, i)).collect();
    let kmat = DMatrix::from_fn(n, n, |i, j| kernel.eval(&pts[i], &pts[j]).unwrap());
    let v = lu_solve(&kmat + DMatrix::identity(n, n) * eps, y) * nf;
    let grads: Vec<DVector<f64>> = pts.iter().map(|p| target.grad_potential(p).unwrap()).collect();
    let vv = &v * v.transpose();

    let mut ynew = DMatrix::zeros(n, d);
    for j in 0..n {
        let mut acc = DVector::zeros(d);
        for i in 0..n {
            acc += kernel.grad2(&pts[j], &pts[i]).unwrap() - &grads[i] * kmat[(j, i)];
        }
        acc /= nf;
        let mut inter = DVector::zeros(d);
        for i in 0..n {
            let g2_ji = kernel.grad2(&pts[j], &pts[i]).unwrap();
            let g1_ji = kernel.grad1(&pts[j], &pts[i]).unwrap();
            for l in 0..n {
                let w = vv[(i, l)];
                let g2_li = kernel.grad2(&pts[l], &pts[i]).unwrap();
                inter += (&g2_ji * kmat[(i, l)] + &g1_ji * kmat[(j, l)] - g2_li * kmat[(j, i)]) * w;
            }
        }
        inter /= nf * nf;
        for k in 0..d {
            ynew[(j, k)] = alpha[j] * y[(j, k)] + st * (acc[k] + inter[k]);
        }
    }
    (xn, ynew, v)
}

/// SVGD direction `(1/N) Σ_i [∇₁K(X_i, X_j) − K(X_i, X_j) ∇f(X_i)]` for every particle `j`.
pub fn svgd_direction_sum(x: &DMatrix<f64>, kernel: &KernelSpec, target: &TargetSpec) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let pts: Vec<Vec<f64>> = (0..n).map(|i| row(x, i)).collect();
    let mut out = DMatrix::zeros(n, d);
    for j in 0..n {
        let mut acc = DVector::zeros(d);
        for i in 0..n {
            let k = kernel.eval(&pts[i], &pts[j]).unwrap();
            acc += kernel.grad1(&pts[i], &pts[j]).unwrap() - target.grad_potential(&pts[i]).unwrap() * k;
        }
        out.row_mut(j).copy_from(&(acc / n as f64).transpose());
    }
    out
}

/// `(1/N²) Σ_{i,j} ⟨V_j, K_ij ∇f(X_i) − ∇₂K(X_j, X_i)⟩`.
pub fn restart_stat_double_sum(x: &DMatrix<f64>, v: &DMatrix<f64>, kernel: &KernelSpec, target: &TargetSpec) -> f64 {
    let n = x.nrows();
    let pts: Vec<Vec<f64>> = (0..n).map(|i| row(x, i)).collect();
    let mut s = 0.0;
    for i in 0..n {
        let g = target.grad_potential(&pts[i]).unwrap();
        for j in 0..n {
            let k = kernel.eval(&pts[i], &pts[j]).unwrap();
            let term = &g * k - kernel.grad2(&pts[j], &pts[i]).unwrap();
            s += v.row(j).transpose().dot(&term);
        }
    }
    s / (n * n) as f64
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        jac.set_column(k, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    jac
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

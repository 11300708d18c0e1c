//! Positive-definite kernels, Gram matrices, bandwidth selection and the
//! regularised inverse `N (K + εI)⁻¹ Y` used to recover density-space momenta.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// A kernel on `R^d`.
///
/// * `Gaussian { bandwidth }`: `K(x, y) = exp(-|x - y|² / (2 σ²))` with `bandwidth = σ²`.
/// * `Bilinear { a }`: `K(x, y) = xᵀ A y + 1` with `A` symmetric positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    Gaussian { bandwidth: f64 },
    Bilinear { a: DMatrix<f64> },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "bandwidth",
                reason: format!("must be positive and finite, got {bandwidth}"),
            });
        }
        Ok(KernelSpec::Gaussian { bandwidth })
    }

    pub fn bilinear(a: DMatrix<f64>) -> Result<Self> {
        linalg::check_spd("A", &a)?;
        Ok(KernelSpec::Bilinear { a })
    }

    /// Bilinear kernel with `A = θ I_d`.
    pub fn bilinear_scaled_identity(d: usize, theta: f64) -> Result<Self> {
        Self::bilinear(DMatrix::identity(d, d) * theta)
    }

    /// Dimension fixed by the kernel parameters, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            KernelSpec::Gaussian { .. } => None,
            KernelSpec::Bilinear { a } => Some(a.nrows()),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, KernelSpec::Gaussian { .. })
    }

    fn check_points(&self, x: &[f64], y: &[f64]) -> Result<()> {
        check_dim("kernel arguments", x.len(), y.len())?;
        if let Some(d) = self.dim() {
            check_dim("kernel matrix A", d, x.len())?;
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_points(x, y)?;
        Ok(match self {
            KernelSpec::Gaussian { bandwidth } => gaussian_value(x, y, *bandwidth),
            KernelSpec::Bilinear { a } => bilinear_form(x, &mat_vec(a, y)) + 1.0,
        })
    }

    /// Gradient with respect to the first argument.
    pub fn grad1(&self, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        self.check_points(x, y)?;
        Ok(match self {
            KernelSpec::Gaussian { .. } => -self.grad2(x, y)?,
            KernelSpec::Bilinear { a } => DVector::from_vec(mat_vec(a, y)),
        })
    }

    /// Gradient with respect to the second argument.
    pub fn grad2(&self, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        self.check_points(x, y)?;
        Ok(match self {
            KernelSpec::Gaussian { bandwidth } => {
                let k = gaussian_value(x, y, *bandwidth);
                DVector::from_iterator(x.len(), x.iter().zip(y).map(|(xi, yi)| (xi - yi) * k / bandwidth))
            }
            KernelSpec::Bilinear { a } => DVector::from_vec(mat_vec(a, x)),
        })
    }

    pub fn gram(&self, points: &DMatrix<f64>) -> Result<GramMatrix> {
        GramMatrix::new(self.clone(), points)
    }
}

fn gaussian_value(x: &[f64], y: &[f64], bandwidth: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * bandwidth)).exp()
}

fn mat_vec(a: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * y[j]).sum())
        .collect()
}

fn bilinear_form(x: &[f64], ay: &[f64]) -> f64 {
    x.iter().zip(ay).map(|(a, b)| a * b).sum()
}

/// Copies the rows of an `N × d` matrix into contiguous vectors.
pub(crate) fn rows_of(points: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..points.nrows())
        .map(|i| points.row(i).iter().copied().collect())
        .collect()
}

/// Kernel matrix `K_ij = K(X_i, X_j)` together with the data it was built from.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub k: DMatrix<f64>,
    pub kernel: KernelSpec,
    pub points: DMatrix<f64>,
}

impl GramMatrix {
    pub fn new(kernel: KernelSpec, points: &DMatrix<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::Precondition("gram matrix needs at least one point".into()));
        }
        if let Some(d) = kernel.dim() {
            check_dim("gram points", d, points.ncols())?;
        }
        let rows = rows_of(points);
        let mut k = DMatrix::zeros(n, n);
        match &kernel {
            KernelSpec::Gaussian { bandwidth } => {
                for i in 0..n {
                    k[(i, i)] = 1.0;
                    for j in (i + 1)..n {
                        let v = gaussian_value(&rows[i], &rows[j], *bandwidth);
                        k[(i, j)] = v;
                        k[(j, i)] = v;
                    }
                }
            }
            KernelSpec::Bilinear { a } => {
                let a_rows: Vec<Vec<f64>> = rows.iter().map(|r| mat_vec(a, r)).collect();
                for i in 0..n {
                    for j in i..n {
                        let v = bilinear_form(&rows[i], &a_rows[j]) + 1.0;
                        k[(i, j)] = v;
                        k[(j, i)] = v;
                    }
                }
            }
        }
        Ok(GramMatrix {
            k,
            kernel,
            points: points.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.k.nrows() == 0
    }

    /// Row sums `K 1_N`.
    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.k.row_iter().map(|r| r.sum()))
    }
}

/// Median heuristic `σ² = med² / (2 ln(N + 1))`, where `med` is the median
/// pairwise Euclidean distance.
pub fn median_bandwidth(points: &DMatrix<f64>) -> Result<f64> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::Precondition("median heuristic needs at least two points".into()));
    }
    let rows = rows_of(points);
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let sq: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            dists.push(sq.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let med = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if med <= 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(med * med / (2.0 * ((n + 1) as f64).ln()))
}

/// `count · (K + εI)⁻¹ Y`.
///
/// For the bilinear kernel with `ε > 0` the solve goes through the Woodbury
/// identity on `K = U Uᵀ`, `U = [X A^{1/2} | 1_N]`, which costs `O(N d²)`.
/// Every other case uses a dense Cholesky solve.
pub fn regularized_inverse_apply(gram: &GramMatrix, eps: f64, y: &DMatrix<f64>, count: usize) -> Result<DMatrix<f64>> {
    check_regularized_args(gram, eps, y)?;
    match &gram.kernel {
        KernelSpec::Bilinear { a } if eps > 0.0 => woodbury_apply(&gram.points, a, eps, y, count),
        _ => regularized_inverse_apply_dense(gram, eps, y, count),
    }
}

/// Reference dense route for [`regularized_inverse_apply`].
pub fn regularized_inverse_apply_dense(
    gram: &GramMatrix,
    eps: f64,
    y: &DMatrix<f64>,
    count: usize,
) -> Result<DMatrix<f64>> {
    check_regularized_args(gram, eps, y)?;
    let n = gram.len();
    let m = &gram.k + DMatrix::identity(n, n) * eps;
    let singular = || Error::Singular {
        smallest_singular_value: linalg::smallest_singular_value(&m),
    };
    let chol = m.clone().cholesky().ok_or_else(singular)?;
    let diag = chol.l().diagonal();
    let max_k = m.diagonal().amax();
    let min_pivot = diag.iter().fold(f64::INFINITY, |acc, &v| acc.min(v * v));
    if min_pivot.is_nan() || min_pivot <= 1e-13 * max_k {
        return Err(singular());
    }
    Ok(chol.solve(y) * count as f64)
}

fn check_regularized_args(gram: &GramMatrix, eps: f64, y: &DMatrix<f64>) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("must be nonnegative and finite, got {eps}"),
        });
    }
    check_dim("regularized solve rows", gram.len(), y.nrows())
}

fn woodbury_apply(
    points: &DMatrix<f64>,
    a: &DMatrix<f64>,
    eps: f64,
    y: &DMatrix<f64>,
    count: usize,
) -> Result<DMatrix<f64>> {
    let (n, d) = points.shape();
    let a_half = linalg::sym_apply(a, f64::sqrt);
    let mut u = DMatrix::zeros(n, d + 1);
    u.view_mut((0, 0), (n, d)).copy_from(&(points * &a_half));
    u.column_mut(d).fill(1.0);
    let inner = DMatrix::identity(d + 1, d + 1) * eps + u.transpose() * &u;
    let chol = inner.cholesky().ok_or(Error::Singular {
        smallest_singular_value: 0.0,
    })?;
    let correction = &u * chol.solve(&(u.transpose() * y));
    Ok((y - correction) * (count as f64 / eps))
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix given through its
/// nonzero eigenpairs `(λ_i, v_i)` with orthonormal `v_i`: `Σ v_i v_iᵀ / λ_i`.
pub fn spectral_pseudo_inverse(pairs: &[(f64, DVector<f64>)]) -> Result<DMatrix<f64>> {
    let d = pairs.first().map(|(_, v)| v.len()).unwrap_or(0);
    let mut out = DMatrix::zeros(d, d);
    for (lambda, v) in pairs {
        check_dim("eigenvector", d, v.len())?;
        if *lambda == 0.0 {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: "eigenvalues in the expansion must be nonzero".into(),
            });
        }
        out += v * v.transpose() / *lambda;
    }
    Ok(out)
}

/// Pseudo-inverse of a symmetric matrix, discarding eigenvalues below
/// `rtol · max |λ|`.
pub fn symmetric_pseudo_inverse(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let eig = linalg::sym_eigen(m);
    let cutoff = rtol * eig.eigenvalues.amax();
    let pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| l.abs() > cutoff)
        .map(|(i, l)| (*l, eig.eigenvectors.column(i).into_owned()))
        .collect();
    if pairs.is_empty() {
        return DMatrix::zeros(m.nrows(), m.ncols());
    }
    spectral_pseudo_inverse(&pairs).expect("eigenvectors share one dimension")
}

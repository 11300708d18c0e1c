//! Small dense linear-algebra helpers shared by the analytic and particle layers.
//!
//! All vectorisation in this crate is column-major: `vec(M)` stacks the
//! columns of `M`, so that `(B ⊗ C) vec(V) = vec(C V Bᵀ)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance used when testing a matrix for symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric part `(M + Mᵀ)/2`.
pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Column-major vectorisation.
pub fn vec_cols(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_cols`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols, "unvec: length mismatch");
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Symmetrised Kronecker sum `A ⊕ B := A ⊗ B + B ⊗ A`.
pub fn kron_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b) + b.kronecker(a)
}

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= SYMMETRY_TOL * scale
}

/// Checks symmetry and positive definiteness (via a Cholesky attempt).
pub fn check_spd(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if is_symmetric(m) && m.iter().all(|x| x.is_finite()) && m.clone().cholesky().is_some() {
        Ok(())
    } else {
        Err(Error::NotSpd { name })
    }
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(sym(m))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).eigenvalues.min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).eigenvalues.max()
}

/// Applies a scalar function to a symmetric matrix through its eigendecomposition.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = sym_eigen(m);
    let mapped = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    sym(&(v * DMatrix::from_diagonal(&mapped) * v.transpose()))
}

/// Inverse of an SPD matrix via Cholesky.
pub fn spd_inverse(name: &'static str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::NotSpd { name })?;
    Ok(sym(&chol.inverse()))
}

/// `ln det M` for SPD `M`.
pub fn spd_log_det(name: &'static str, m: &DMatrix<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or(Error::NotSpd { name })?;
    Ok(2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Frobenius norm of the commutator `AB − BA`.
pub fn commutator_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a * b - b * a).norm()
}

/// Smallest singular value of a square matrix.
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.min()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_vec_identity_round_trip() {
        let b = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.5]);
        let c = DMatrix::from_row_slice(2, 2, &[0.3, 1.1, -0.7, 2.0]);
        let v = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 4.0]);
        let lhs = kron(&b, &c) * vec_cols(&v);
        let rhs = vec_cols(&(&c * &v * b.transpose()));
        assert!((lhs - rhs).amax() < 1e-14);
        let back = unvec(&vec_cols(&v), 2, 3);
        assert_eq!(back, v);
    }

    #[test]
    fn kron_sum_is_symmetric_in_arguments() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.5]);
        assert_eq!(kron_sum(&a, &b), kron_sum(&b, &a));
    }

    #[test]
    fn spd_checks() {
        let good = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(check_spd("good", &good).is_ok());
        assert!(check_spd("bad", &bad).is_err());
        let inv = spd_inverse("good", &good).unwrap();
        assert!((&good * &inv - DMatrix::identity(2, 2)).amax() < 1e-14);
        let ld = spd_log_det("good", &good).unwrap();
        assert!((ld - (2.0 * 1.0 - 0.25f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn sym_apply_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, -2.0, -2.0, 3.0]);
        let r = sym_apply(&m, f64::sqrt);
        assert!((&r * &r - &m).amax() < 1e-13);
    }
}

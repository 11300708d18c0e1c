//! Linearisations of the Gaussian flows at equilibrium, their spectra and the
//! parameter choices that optimise explicit-Euler convergence.
//!
//! A linearised system is written `ẋ = -B x`, with the state ordered as
//! `(μ, vec Σ)` or `(μ, vec Σ, ν, vec S)`.

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::COMMUTE_TOL;
use crate::linalg::{self, kron, kron_sum};

/// Tolerance `tol · (1 + |λ|)` used when pairing closed-form and numeric eigenvalues.
pub const EIGEN_MATCH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex<f64>> for Eigenvalue {
    fn from(c: Complex<f64>) -> Self {
        Eigenvalue { re: c.re, im: c.im }
    }
}

impl From<Eigenvalue> for Complex<f64> {
    fn from(e: Eigenvalue) -> Self {
        Complex::new(e.re, e.im)
    }
}

/// Summary of the spectrum of a system matrix `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Eigenvalue>,
    /// `min Re λ`.
    pub spectral_abscissa: f64,
    /// `max |λ| / min |λ|`.
    pub condition_number: f64,
    /// `2 / (max |λ| + min |λ|)`.
    pub optimal_step: f64,
    /// `(κ - 1) / (κ + 1)`.
    pub contraction: f64,
    /// `max |1 - h* λ|`, the actual asymptotic Euler rate at `h*`.
    pub euler_spectral_radius: f64,
    /// Largest distance between paired closed-form and numeric eigenvalues,
    /// when both were computed.
    pub eigensolver_mismatch: Option<f64>,
}

impl SpectralReport {
    pub fn from_eigenvalues(eigs: &[Complex<f64>]) -> Result<Self> {
        if eigs.is_empty() {
            return Err(Error::Precondition("empty spectrum".into()));
        }
        let abscissa = eigs.iter().map(|l| l.re).fold(f64::INFINITY, f64::min);
        let max_abs = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
        let min_abs = eigs.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
        let kappa = max_abs / min_abs;
        let h = 2.0 / (max_abs + min_abs);
        Ok(SpectralReport {
            eigenvalues: eigs.iter().map(|&c| c.into()).collect(),
            spectral_abscissa: abscissa,
            condition_number: kappa,
            optimal_step: h,
            contraction: (kappa - 1.0) / (kappa + 1.0),
            euler_spectral_radius: euler_spectral_radius(eigs, h),
            eigensolver_mismatch: None,
        })
    }

    pub fn complex_eigenvalues(&self) -> Vec<Complex<f64>> {
        self.eigenvalues.iter().map(|&e| e.into()).collect()
    }
}

/// `max |1 - h λ|` over the spectrum.
pub fn euler_spectral_radius(eigs: &[Complex<f64>], h: f64) -> f64 {
    eigs.iter()
        .map(|l| (Complex::new(1.0, 0.0) - l * h).norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a general real matrix.
pub fn numeric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::Precondition("eigenvalues need a square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    Ok(m.complex_eigenvalues().iter().copied().collect())
}

/// Greedy nearest pairing of two spectra. Returns the largest paired distance
/// relative to `1 + |λ|`.
pub fn match_spectra(expected: &[Complex<f64>], actual: &[Complex<f64>]) -> Result<f64> {
    check_dim("spectrum length", expected.len(), actual.len())?;
    let mut used = vec![false; actual.len()];
    let mut worst: f64 = 0.0;
    for e in expected {
        let (best, dist) = actual
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, a)| (j, (a - e).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("spectra have equal length");
        used[best] = true;
        worst = worst.max(dist / (1.0 + e.norm()));
    }
    Ok(worst)
}

fn check_square(name: &'static str, d: usize, m: &DMatrix<f64>) -> Result<()> {
    check_dim(name, d, m.nrows())?;
    check_dim(name, d, m.ncols())
}

fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn kernel_value(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    b.dot(&(a * b)) + 1.0
}

/// System matrix of linearised SVGD on Gaussians at `(b, Q)`:
/// `[[K(b,b) Q⁻¹, (bᵀA) ⊗ Q⁻¹], [(QAb) ⊕ Q⁻¹, Q⁻¹ ⊕ (QA)]]`,
/// where `M ⊕ N = M ⊗ N + N ⊗ M`.
pub fn svgd_linearized_matrix(a: &DMatrix<f64>, b: &DVector<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = b.len();
    check_square("A", d, a)?;
    check_square("Q", d, q)?;
    linalg::check_spd("A", a)?;
    linalg::check_spd("Q", q)?;
    let qi = linalg::spd_inverse("Q", q)?;
    let bt_a = column(&(a * b)).transpose();
    let qab = column(&(q * a * b));
    let n = d + d * d;
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((0, 0), (d, d)).copy_from(&(&qi * kernel_value(a, b)));
    m.view_mut((0, d), (d, d * d)).copy_from(&kron(&bt_a, &qi));
    m.view_mut((d, 0), (d * d, d)).copy_from(&kron_sum(&qab, &qi));
    m.view_mut((d, d), (d * d, d * d)).copy_from(&kron_sum(&qi, &(q * a)));
    Ok(m)
}

/// Eigenvalues `(λ₋, λ₊)` of the one-dimensional SVGD system matrix,
/// `λ± = (1/2Q)[(2AQ + Ab² + 1) ± √((2AQ + Ab² + 1)² - 8AQ)]`.
pub fn eigs_1d(a: f64, q: f64, b: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && q > 0.0) {
        return Err(Error::InvalidParameter {
            name: "A, Q",
            reason: format!("must be positive, got A = {a}, Q = {q}"),
        });
    }
    let s = 2.0 * a * q + a * b * b + 1.0;
    let disc = (s * s - 8.0 * a * q).max(0.0).sqrt();
    Ok(((s - disc) / (2.0 * q), (s + disc) / (2.0 * q)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimalAMode {
    Scalar1d,
    Commuting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalA {
    pub a: DMatrix<f64>,
    /// Euler step `2 / (λ_min + λ_max)` for the resulting system matrix.
    pub optimal_step: f64,
}

/// Kernel matrix minimising the condition number of linearised SVGD.
///
/// `Scalar1d`: `A = 1/(2Q + b²)` with `h* = Q`. `Commuting` (needs `b = 0`):
/// `A = ½ Q⁻¹`, whose system matrix has spectrum in `[1/λ_max(Q), 1/λ_min(Q)]`.
pub fn optimal_a_svgd(b: &DVector<f64>, q: &DMatrix<f64>, mode: OptimalAMode) -> Result<OptimalA> {
    let d = b.len();
    check_square("Q", d, q)?;
    linalg::check_spd("Q", q)?;
    match mode {
        OptimalAMode::Scalar1d => {
            if d != 1 {
                return Err(Error::Precondition(format!("scalar-1d mode needs d = 1, got d = {d}")));
            }
            let (qv, bv) = (q[(0, 0)], b[0]);
            Ok(OptimalA {
                a: DMatrix::from_element(1, 1, 1.0 / (2.0 * qv + bv * bv)),
                optimal_step: qv,
            })
        }
        OptimalAMode::Commuting => {
            if b.amax() != 0.0 {
                return Err(Error::Precondition("commuting mode needs b = 0".into()));
            }
            let qi = linalg::spd_inverse("Q", q)?;
            let lo = 1.0 / linalg::max_eigenvalue(q);
            let hi = 1.0 / linalg::min_eigenvalue(q);
            Ok(OptimalA {
                a: qi * 0.5,
                optimal_step: 2.0 / (lo + hi),
            })
        }
    }
}

/// Joint eigenvalues `(a_i, q_i)` of two commuting symmetric matrices.
pub fn joint_eigenvalues(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let d = a.nrows();
    check_square("Q", d, q)?;
    if linalg::commutator_norm(a, q) > COMMUTE_TOL * (1.0 + a.norm() * q.norm()) {
        return Err(Error::Precondition("A and Q do not commute".into()));
    }
    let mix = a + q * std::f64::consts::FRAC_1_SQRT_2 * std::f64::consts::E;
    let v = linalg::sym_eigen(&mix).eigenvectors;
    Ok((0..d)
        .map(|i| {
            let col = v.column(i);
            (col.dot(&(a * col)), col.dot(&(q * col)))
        })
        .collect())
}

/// `B_{A,Q,α} = [[0, -2 (QAQ ⊕ I)], [½ Q⁻¹ ⊗ Q⁻¹, α I]]`, the centred
/// accelerated system matrix on `(vec Σ, vec S)`.
pub fn asvgd_centered_matrix(a: &DMatrix<f64>, q: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    check_square("Q", d, q)?;
    let qi = linalg::spd_inverse("Q", q)?;
    let eye = DMatrix::identity(d, d);
    let n = d * d;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, n), (n, n))
        .copy_from(&(kron_sum(&(q * a * q), &eye) * -2.0));
    m.view_mut((n, 0), (n, n)).copy_from(&(kron(&qi, &qi) * 0.5));
    m.view_mut((n, n), (n, n)).fill_diagonal(alpha);
    Ok(m)
}

/// Full linearisation of accelerated SVGD on Gaussians at `(b, Q, 0, 0)`,
/// state `(μ, vec Σ, ν, vec S)`, with `u = QAb`:
///
/// ```text
/// [ 0      0               -K(b,b) I        -2 (bᵀAQ) ⊗ I ]
/// [ 0      0               -(u ⊗ I + I ⊗ u) -2 (QAQ ⊕ I)  ]
/// [ Q⁻¹    0                α I              0             ]
/// [ 0      ½ Q⁻¹ ⊗ Q⁻¹      0                α I           ]
/// ```
pub fn asvgd_full_linearized_matrix(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    q: &DMatrix<f64>,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    let d = b.len();
    check_square("A", d, a)?;
    check_square("Q", d, q)?;
    let qi = linalg::spd_inverse("Q", q)?;
    let eye = DMatrix::identity(d, d);
    let u = column(&(q * a * b));
    let n2 = d * d;
    let (i_mu, i_sig, i_nu, i_s) = (0, d, d + n2, 2 * d + n2);
    let mut m = DMatrix::zeros(2 * (d + n2), 2 * (d + n2));
    m.view_mut((i_mu, i_nu), (d, d))
        .copy_from(&(&eye * -kernel_value(a, b)));
    m.view_mut((i_mu, i_s), (d, n2))
        .copy_from(&(kron(&u.transpose(), &eye) * -2.0));
    m.view_mut((i_sig, i_nu), (n2, d))
        .copy_from(&(-(kron(&u, &eye) + kron(&eye, &u))));
    m.view_mut((i_sig, i_s), (n2, n2))
        .copy_from(&(kron_sum(&(q * a * q), &eye) * -2.0));
    m.view_mut((i_nu, i_mu), (d, d)).copy_from(&qi);
    m.view_mut((i_nu, i_nu), (d, d)).fill_diagonal(alpha);
    m.view_mut((i_s, i_sig), (n2, n2)).copy_from(&(kron(&qi, &qi) * 0.5));
    m.view_mut((i_s, i_s), (n2, n2)).fill_diagonal(alpha);
    Ok(m)
}

/// `μ_ij = (q_i/q_j) a_i + (q_j/q_i) a_j` for commuting `A`, `Q`.
pub fn mode_frequencies(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Vec<f64>> {
    let pairs = joint_eigenvalues(a, q)?;
    let mut out = Vec::with_capacity(pairs.len() * pairs.len());
    for &(ai, qi) in &pairs {
        for &(aj, qj) in &pairs {
            out.push(qi / qj * ai + qj / qi * aj);
        }
    }
    Ok(out)
}

/// Closed-form spectrum `α/2 ± ½ √(α² - 4 μ_ij)` of `B_{A,Q,α}`.
pub fn asvgd_closed_form_eigenvalues(a: &DMatrix<f64>, q: &DMatrix<f64>, alpha: f64) -> Result<Vec<Complex<f64>>> {
    let mut out = Vec::new();
    for mu in mode_frequencies(a, q)? {
        let root = Complex::new(alpha * alpha - 4.0 * mu, 0.0).sqrt() * 0.5;
        let half = Complex::new(alpha / 2.0, 0.0);
        out.push(half + root);
        out.push(half - root);
    }
    Ok(out)
}

/// Spectrum of the centred accelerated system, from the closed form,
/// cross-checked against a numeric eigensolve of the assembled matrix.
pub fn asvgd_linearized_spectrum(a: &DMatrix<f64>, q: &DMatrix<f64>, alpha: f64) -> Result<SpectralReport> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("must be nonnegative, got {alpha}"),
        });
    }
    linalg::check_spd("A", a)?;
    linalg::check_spd("Q", q)?;
    let closed = asvgd_closed_form_eigenvalues(a, q, alpha)?;
    let numeric = numeric_eigenvalues(&asvgd_centered_matrix(a, q, alpha)?)?;
    let mut report = SpectralReport::from_eigenvalues(&closed)?;
    report.eigensolver_mismatch = Some(match_spectra(&closed, &numeric)?);
    Ok(report)
}

/// `α* = √(8 λ_min(A))`.
pub fn optimal_damping(a: &DMatrix<f64>) -> Result<f64> {
    linalg::check_spd("A", a)?;
    Ok((8.0 * linalg::min_eigenvalue(a)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsvgdRates {
    pub kappa_q: f64,
    /// `√(½(κ + 1/κ))`.
    pub kappa_tilde: f64,
    /// `(κ̃ - 1)/(κ̃ + 1)`.
    pub rho: f64,
    /// `2 / (√max μ_ij + √(2θ))`.
    pub optimal_step: f64,
    pub optimal_damping: f64,
    /// `(√κ - 1)/(√κ + 1)`.
    pub nesterov_rate: f64,
}

/// Rates of the centred accelerated system for `A = θ I` at `α = √(8θ)`.
pub fn asvgd_rates(q: &DMatrix<f64>, theta: f64) -> Result<AsvgdRates> {
    linalg::check_spd("Q", q)?;
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("must be positive, got {theta}"),
        });
    }
    let kappa = linalg::max_eigenvalue(q) / linalg::min_eigenvalue(q);
    let kappa_tilde = (0.5 * (kappa + 1.0 / kappa)).sqrt();
    let max_mu = theta * (kappa + 1.0 / kappa);
    Ok(AsvgdRates {
        kappa_q: kappa,
        kappa_tilde,
        rho: (kappa_tilde - 1.0) / (kappa_tilde + 1.0),
        optimal_step: 2.0 / (max_mu.sqrt() + (2.0 * theta).sqrt()),
        optimal_damping: (8.0 * theta).sqrt(),
        nesterov_rate: (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerContraction {
    /// Fitted asymptotic per-step contraction of `(I - hB)^k x`.
    pub measured_rate: f64,
    /// `max |1 - hλ|` over the numeric spectrum of `B`.
    pub predicted_radius: f64,
}

impl EulerContraction {
    pub fn stable(&self) -> bool {
        self.predicted_radius < 1.0
    }

    /// Measured rate does not exceed the spectral prediction by more than `tol`.
    pub fn within_prediction(&self, tol: f64) -> bool {
        self.measured_rate <= self.predicted_radius + tol
    }
}

/// Iterates explicit Euler `x ← (I - hB) x` from a few random unit vectors
/// and fits the geometric rate over the second half of `steps`.
pub fn euler_contraction_check(b: &DMatrix<f64>, h: f64, steps: usize, seed: u64) -> Result<EulerContraction> {
    if !b.is_square() {
        return Err(Error::Precondition("system matrix must be square".into()));
    }
    if steps < 2 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: "need at least two steps".into(),
        });
    }
    let n = b.nrows();
    let step = DMatrix::<f64>::identity(n, n) - b * h;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = steps / 2;
    let mut measured: f64 = 0.0;
    for _ in 0..3 {
        let mut x = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        x /= x.norm();
        let mut log_growth = 0.0;
        let mut collapsed = false;
        for k in 0..steps {
            x = &step * x;
            let norm = x.norm();
            if norm == 0.0 || !norm.is_finite() {
                collapsed = norm == 0.0;
                if !collapsed {
                    log_growth = f64::INFINITY;
                }
                break;
            }
            if k >= start {
                log_growth += norm.ln();
            }
            x /= norm;
        }
        let rate = if collapsed {
            0.0
        } else {
            (log_growth / (steps - start) as f64).exp()
        };
        measured = measured.max(rate);
    }
    let eigs = numeric_eigenvalues(b)?;
    Ok(EulerContraction {
        measured_rate: measured,
        predicted_radius: euler_spectral_radius(&eigs, h),
    })
}

/// The matrix
/// `[[A ⊗ I, (1/√2)(Ab) ⊗ Q^{-1/2}], [(1/√2)(bᵀA) ⊗ Q^{-1/2}, ½ K(b,b) Q⁻¹]]`
/// whose smallest eigenvalue `γ` gives the SVGD state decay rate `2γ`.
pub fn gamma_matrix(a: &DMatrix<f64>, b: &DVector<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = b.len();
    check_square("A", d, a)?;
    check_square("Q", d, q)?;
    linalg::check_spd("A", a)?;
    linalg::check_spd("Q", q)?;
    let qi = linalg::spd_inverse("Q", q)?;
    let q_inv_half = linalg::sym_apply(q, |l| 1.0 / l.sqrt());
    let ab = column(&(a * b));
    let eye = DMatrix::identity(d, d);
    let n2 = d * d;
    let off = kron(&ab, &q_inv_half) * std::f64::consts::FRAC_1_SQRT_2;
    let mut m = DMatrix::zeros(n2 + d, n2 + d);
    m.view_mut((0, 0), (n2, n2)).copy_from(&kron(a, &eye));
    m.view_mut((0, n2), (n2, d)).copy_from(&off);
    m.view_mut((n2, 0), (d, n2)).copy_from(&off.transpose());
    m.view_mut((n2, n2), (d, d))
        .copy_from(&(qi * (0.5 * kernel_value(a, b))));
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaRate {
    /// `λ_min` of [`gamma_matrix`].
    pub gamma: f64,
    /// `1 / (K(b,b) + 2 λ_min(A) λ_max(Q))`.
    pub printed_bound: f64,
    /// `2 λ_min(A) / (K + c + √((K + c)² - 4c))` with `c = 2 λ_min(A) λ_max(Q)`.
    pub valid_bound: f64,
}

pub fn gamma_rate(a: &DMatrix<f64>, b: &DVector<f64>, q: &DMatrix<f64>) -> Result<GammaRate> {
    let m = gamma_matrix(a, b, q)?;
    let gamma = linalg::min_eigenvalue(&m);
    let k = kernel_value(a, b);
    let amin = linalg::min_eigenvalue(a);
    let c = 2.0 * amin * linalg::max_eigenvalue(q);
    let root = ((k + c) * (k + c) - 4.0 * c).max(0.0).sqrt();
    Ok(GammaRate {
        gamma,
        printed_bound: 1.0 / (k + c),
        valid_bound: 2.0 * amin / (k + c + root),
    })
}

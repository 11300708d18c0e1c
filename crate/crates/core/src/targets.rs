//! Target potentials `f` with `π ∝ exp(-f)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Constants of the double-banana potential
/// `f(x) = -ln(exp(-F(x)) + exp(-F(Rx)))`, `F(x) = (a - x₁)²/c₁ + c₂ (x₂ - x₁²)²`,
/// `R = diag(1, -1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BananaParams {
    pub a: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for BananaParams {
    fn default() -> Self {
        BananaParams {
            a: 1.0,
            c1: 0.5,
            c2: 5.0,
        }
    }
}

/// Gaussian target `N(b, Q)` with cached `Q⁻¹` and `ln det Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTarget {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    pub log_det_cov: f64,
}

type PotentialFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
pub enum TargetSpec {
    Gaussian(GaussianTarget),
    /// `¼ (x₁⁴ + x₂⁴)` on `R²`.
    Quartic,
    DoubleBananas(BananaParams),
    Custom {
        dim: Option<usize>,
        potential: Arc<PotentialFn>,
        gradient: Arc<GradientFn>,
    },
}

impl fmt::Debug for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::Gaussian(g) => f.debug_tuple("Gaussian").field(g).finish(),
            TargetSpec::Quartic => write!(f, "Quartic"),
            TargetSpec::DoubleBananas(p) => f.debug_tuple("DoubleBananas").field(p).finish(),
            TargetSpec::Custom { dim, .. } => f.debug_struct("Custom").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

/// Names accepted by [`builtin_target`].
pub const BUILTIN_TARGETS: [&str; 4] = ["gauss-correlated", "gauss-aniso", "quartic", "double-bananas"];

impl TargetSpec {
    /// `N(mean, cov)`; the potential is `½ (x-b)ᵀ Q⁻¹ (x-b)`.
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim("gaussian target mean", cov.nrows(), mean.len())?;
        linalg::check_spd("Q", &cov)?;
        let precision = linalg::spd_inverse("Q", &cov)?;
        let log_det_cov = linalg::spd_log_det("Q", &cov)?;
        Ok(TargetSpec::Gaussian(GaussianTarget {
            mean,
            cov,
            precision,
            log_det_cov,
        }))
    }

    /// Gaussian whose potential is `½ (x-b)ᵀ P (x-b)` for the given precision `P`.
    pub fn gaussian_from_precision(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        linalg::check_spd("precision", &precision)?;
        let cov = linalg::spd_inverse("precision", &precision)?;
        Self::gaussian(mean, cov)
    }

    pub fn custom(
        dim: Option<usize>,
        potential: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        TargetSpec::Custom {
            dim,
            potential: Arc::new(potential),
            gradient: Arc::new(gradient),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            TargetSpec::Gaussian(g) => Some(g.mean.len()),
            TargetSpec::Quartic | TargetSpec::DoubleBananas(_) => Some(2),
            TargetSpec::Custom { dim, .. } => *dim,
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianTarget> {
        match self {
            TargetSpec::Gaussian(g) => Some(g),
            _ => None,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        match self.dim() {
            Some(d) => check_dim("target argument", d, x.len()),
            None => Ok(()),
        }
    }

    pub fn potential(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(match self {
            TargetSpec::Gaussian(g) => {
                let r = centered(g, x);
                0.5 * r.dot(&(&g.precision * &r))
            }
            TargetSpec::Quartic => 0.25 * (x[0].powi(4) + x[1].powi(4)),
            TargetSpec::DoubleBananas(p) => {
                let (f1, f2) = (banana(p, x[0], x[1]), banana(p, x[0], -x[1]));
                let m = f1.min(f2);
                m - ((m - f1).exp() + (m - f2).exp()).ln()
            }
            TargetSpec::Custom { potential, .. } => potential(x),
        })
    }

    pub fn grad_potential(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(match self {
            TargetSpec::Gaussian(g) => &g.precision * centered(g, x),
            TargetSpec::Quartic => DVector::from_vec(vec![x[0].powi(3), x[1].powi(3)]),
            TargetSpec::DoubleBananas(p) => {
                let (f1, f2) = (banana(p, x[0], x[1]), banana(p, x[0], -x[1]));
                // Softmax weights of the two components.
                let m = f1.min(f2);
                let (e1, e2) = ((m - f1).exp(), (m - f2).exp());
                let (w1, w2) = (e1 / (e1 + e2), e2 / (e1 + e2));
                let g1 = banana_grad(p, x[0], x[1]);
                let g2 = banana_grad(p, x[0], -x[1]);
                // The mirrored component is F(Rx); chain rule flips the second coordinate.
                DVector::from_vec(vec![w1 * g1[0] + w2 * g2[0], w1 * g1[1] - w2 * g2[1]])
            }
            TargetSpec::Custom { gradient, .. } => DVector::from_vec(gradient(x)),
        })
    }

    /// Row-wise gradients `∇f(X)` of an `N × d` particle matrix.
    pub fn grad_matrix(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (n, d) = points.shape();
        let mut out = DMatrix::zeros(n, d);
        let mut row = vec![0.0; d];
        for i in 0..n {
            for (j, r) in row.iter_mut().enumerate() {
                *r = points[(i, j)];
            }
            let g = self.grad_potential(&row)?;
            check_dim("custom gradient output", d, g.len())?;
            out.row_mut(i).copy_from(&g.transpose());
        }
        Ok(out)
    }
}

fn centered(g: &GaussianTarget, x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(g.mean.iter()).map(|(a, b)| a - b))
}

fn banana(p: &BananaParams, x1: f64, x2: f64) -> f64 {
    (p.a - x1).powi(2) / p.c1 + p.c2 * (x2 - x1 * x1).powi(2)
}

fn banana_grad(p: &BananaParams, x1: f64, x2: f64) -> [f64; 2] {
    let w = x2 - x1 * x1;
    [-2.0 * (p.a - x1) / p.c1 - 4.0 * p.c2 * w * x1, 2.0 * p.c2 * w]
}

/// Built-in targets by name.
///
/// `gauss-correlated` uses the matrix `[[3, -2], [-2, 3]]`; `q_is_precision`
/// selects whether that matrix is the precision (potential `½ xᵀ Q x`) or
/// the covariance of the target.
pub fn builtin_target(name: &str, q_is_precision: bool) -> Result<TargetSpec> {
    match name {
        "gauss-correlated" => {
            let q = DMatrix::from_row_slice(2, 2, &[3.0, -2.0, -2.0, 3.0]);
            let mean = DVector::zeros(2);
            if q_is_precision {
                TargetSpec::gaussian_from_precision(mean, q)
            } else {
                TargetSpec::gaussian(mean, q)
            }
        }
        "gauss-aniso" => TargetSpec::gaussian(
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 0.05])),
        ),
        "quartic" => Ok(TargetSpec::Quartic),
        "double-bananas" => Ok(TargetSpec::DoubleBananas(BananaParams::default())),
        other => Err(Error::UnknownName {
            kind: "target",
            name: other.to_string(),
            valid: BUILTIN_TARGETS.to_vec(),
        }),
    }
}

/// All built-in targets with their default interpretation.
pub fn builtin_targets() -> Vec<(&'static str, TargetSpec)> {
    BUILTIN_TARGETS
        .iter()
        .map(|&n| (n, builtin_target(n, true).expect("built-in names are valid")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_potential_examples() {
        let t = builtin_target("gauss-aniso", true).unwrap();
        assert_eq!(t.potential(&[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(t.grad_potential(&[1.0, 1.0]).unwrap().amax(), 0.0);
        let centred = TargetSpec::gaussian(
            DVector::zeros(2),
            DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 0.05])),
        )
        .unwrap();
        assert_relative_eq!(centred.potential(&[1.0, 0.0]).unwrap(), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn quartic_examples() {
        let t = TargetSpec::Quartic;
        assert_eq!(t.potential(&[1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(
            t.grad_potential(&[1.0, -1.0]).unwrap(),
            DVector::from_vec(vec![1.0, -1.0])
        );
        assert!(t.potential(&[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn builtin_names() {
        match builtin_target("gauss-aniso", true).unwrap() {
            TargetSpec::Gaussian(g) => {
                assert_eq!(g.mean, DVector::from_vec(vec![1.0, 1.0]));
                assert_eq!(g.cov, DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 0.05])));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(builtin_target("quartic", true).unwrap(), TargetSpec::Quartic));
        let err = builtin_target("nonexistent", true).unwrap_err();
        assert!(err.to_string().contains("double-bananas"));
        assert_eq!(builtin_targets().len(), 4);
    }

    #[test]
    fn correlated_interpretations_differ() {
        let p = builtin_target("gauss-correlated", true).unwrap();
        let c = builtin_target("gauss-correlated", false).unwrap();
        // ½ xᵀ Q x at x = e₁ is 1.5 under the precision reading.
        assert_relative_eq!(p.potential(&[1.0, 0.0]).unwrap(), 1.5, epsilon = 1e-14);
        // Q⁻¹ = [[3, 2], [2, 3]] / 5, so ½ e₁ᵀ Q⁻¹ e₁ = 0.3.
        assert_relative_eq!(c.potential(&[1.0, 0.0]).unwrap(), 0.3, epsilon = 1e-14);
    }

    #[test]
    fn bananas_are_bimodal_and_symmetric() {
        let t = builtin_target("double-bananas", true).unwrap();
        let up = t.potential(&[1.0, 1.0]).unwrap();
        let down = t.potential(&[1.0, -1.0]).unwrap();
        let middle = t.potential(&[1.0, 0.0]).unwrap();
        assert_relative_eq!(up, down, epsilon = 1e-14);
        assert!(middle > up + 1.0);
        // Far from either mode the log-sum-exp must not underflow.
        assert!(t.potential(&[0.0, 7.0]).unwrap().is_finite());
        assert!(t.grad_potential(&[0.0, 7.0]).unwrap().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn custom_target_forwards() {
        let t = TargetSpec::custom(Some(1), |x| x[0] * x[0], |x| vec![2.0 * x[0]]);
        assert_eq!(t.potential(&[3.0]).unwrap(), 9.0);
        assert_eq!(t.grad_potential(&[3.0]).unwrap()[0], 6.0);
        assert!(t.potential(&[3.0, 1.0]).is_err());
    }
}

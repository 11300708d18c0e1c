use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

/// Particle state of accelerated SVGD.
///
/// Rows are particles. `momenta` holds the particle velocities `Y`,
/// `density_momenta` the density-space momenta `V` (row `i` approximates
/// `∇Φ(X_i)`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: DMatrix<f64>,
    pub momenta: DMatrix<f64>,
    pub density_momenta: DMatrix<f64>,
    pub restart_count: Vec<u64>,
    /// `|X_i^k - X_i^{k-1}|` from the previous step.
    pub prev_step_norms: Vec<f64>,
    /// False until one step has populated `prev_step_norms`.
    pub has_history: bool,
    pub iteration: usize,
}

impl ParticleEnsemble {
    /// Ensemble at rest: `Y = V = 0`, all restart counters 1.
    pub fn new(positions: DMatrix<f64>) -> Self {
        let (n, d) = positions.shape();
        ParticleEnsemble {
            positions,
            momenta: DMatrix::zeros(n, d),
            density_momenta: DMatrix::zeros(n, d),
            restart_count: vec![1; n],
            prev_step_norms: vec![0.0; n],
            has_history: false,
            iteration: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.positions.shape();
        check_dim("momenta rows", n, self.momenta.nrows())?;
        check_dim("momenta cols", d, self.momenta.ncols())?;
        check_dim("density momenta rows", n, self.density_momenta.nrows())?;
        check_dim("density momenta cols", d, self.density_momenta.ncols())?;
        check_dim("restart counters", n, self.restart_count.len())?;
        check_dim("step norms", n, self.prev_step_norms.len())?;
        if self.restart_count.contains(&0) {
            return Err(Error::Precondition("restart counters must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies the row permutation `perm` (new row `i` is old row `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let rows = |m: &DMatrix<f64>| m.select_rows(perm.iter());
        ParticleEnsemble {
            positions: rows(&self.positions),
            momenta: rows(&self.momenta),
            density_momenta: rows(&self.density_momenta),
            restart_count: perm.iter().map(|&i| self.restart_count[i]).collect(),
            prev_step_norms: perm.iter().map(|&i| self.prev_step_norms[i]).collect(),
            has_history: self.has_history,
            iteration: self.iteration,
        }
    }
}

/// Draws `n` particles from `N(mean, cov)`.
pub fn init_gaussian_particles<R: Rng + ?Sized>(
    n: usize,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let d = mean.len();
    check_dim("initial covariance", d, cov.nrows())?;
    let l = cov
        .clone()
        .cholesky()
        .ok_or(Error::NotSpd {
            name: "initial covariance",
        })?
        .l();
    let mut x = DMatrix::zeros(n, d);
    let mut xi = DVector::zeros(d);
    for i in 0..n {
        for v in xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let row = mean + &l * &xi;
        x.row_mut(i).copy_from(&row.transpose());
    }
    Ok(x)
}

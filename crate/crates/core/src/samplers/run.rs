use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::asvgd::asvgd_step;
use super::config::{SamplerConfig, SamplerKind};
use super::ensemble::{init_gaussian_particles, ParticleEnsemble};
use super::langevin::{mala_step, ula_step, uld_step};
use super::svgd::{svgd_step_bilinear, svgd_step_gaussian};
use crate::error::{check_dim, Result};
use crate::kernels::KernelSpec;

/// Per-step diagnostics shared by all samplers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepDiagnostics {
    pub iteration: usize,
    pub mean_speed: f64,
    pub restart_trace: Option<f64>,
    pub gradient_restarted: bool,
    pub speed_restarts: usize,
    pub acceptance_rate: Option<f64>,
}

/// What a [`Recorder`] sees after every step (and once for the initial state).
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<'a> {
    pub iteration: usize,
    pub ensemble: &'a ParticleEnsemble,
    pub diagnostics: Option<&'a StepDiagnostics>,
}

pub trait Recorder {
    fn record(&mut self, record: StepRecord<'_>) -> Result<()>;
}

impl<F: FnMut(StepRecord<'_>) -> Result<()>> Recorder for F {
    fn record(&mut self, record: StepRecord<'_>) -> Result<()> {
        self(record)
    }
}

/// Positions after every step, starting with the initial state.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub positions: Vec<DMatrix<f64>>,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// A sampler with its own deterministic random stream.
///
/// For ULD the ensemble's `momenta` hold the Langevin velocities.
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
    cfg: SamplerConfig,
    ensemble: ParticleEnsemble,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(kind: SamplerKind, cfg: SamplerConfig, initial: DMatrix<f64>) -> Result<Self> {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::with_rng(kind, cfg, initial, rng)
    }

    /// Draws `n` initial particles from `N(mean, cov)` using the sampler's seed.
    pub fn from_gaussian_init(
        kind: SamplerKind,
        cfg: SamplerConfig,
        n: usize,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let initial = init_gaussian_particles(n, mean, cov, &mut rng)?;
        Self::with_rng(kind, cfg, initial, rng)
    }

    fn with_rng(kind: SamplerKind, cfg: SamplerConfig, initial: DMatrix<f64>, rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        if let Some(d) = cfg.target.dim() {
            check_dim("initial particles", d, initial.ncols())?;
        }
        if let Some(d) = cfg.kernel.dim() {
            check_dim("initial particles", d, initial.ncols())?;
        }
        Ok(Sampler {
            kind,
            cfg,
            ensemble: ParticleEnsemble::new(initial),
            rng,
        })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        &self.ensemble
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.ensemble.positions
    }

    pub fn iteration(&self) -> usize {
        self.ensemble.iteration
    }

    pub fn step(&mut self) -> Result<StepDiagnostics> {
        let iteration = self.ensemble.iteration + 1;
        let before = self.ensemble.positions.clone();
        let mut diag = StepDiagnostics {
            iteration,
            ..Default::default()
        };
        let cfg = &self.cfg;
        let ens = &mut self.ensemble;
        match self.kind {
            SamplerKind::Asvgd => {
                let info = asvgd_step(ens, cfg)?;
                diag.restart_trace = info.restart_trace;
                diag.gradient_restarted = info.gradient_restarted;
                diag.speed_restarts = info.speed_restarts;
            }
            SamplerKind::Svgd => {
                match &cfg.kernel {
                    KernelSpec::Gaussian { bandwidth } => svgd_step_gaussian(
                        &mut ens.positions,
                        *bandwidth,
                        &cfg.target,
                        cfg.step_size,
                        cfg.alg2_literal,
                        iteration,
                    )?,
                    KernelSpec::Bilinear { a } => {
                        svgd_step_bilinear(&mut ens.positions, a, &cfg.target, cfg.step_size, iteration)?
                    }
                }
                ens.iteration = iteration;
            }
            SamplerKind::Ula => {
                ula_step(&mut ens.positions, &cfg.target, cfg.step_size, &mut self.rng, iteration)?;
                ens.iteration = iteration;
            }
            SamplerKind::Mala => {
                let acc = mala_step(&mut ens.positions, &cfg.target, cfg.step_size, &mut self.rng, iteration)?;
                let n = acc.len().max(1) as f64;
                diag.acceptance_rate = Some(acc.iter().filter(|&&a| a).count() as f64 / n);
                ens.iteration = iteration;
            }
            SamplerKind::Uld => {
                uld_step(
                    &mut ens.positions,
                    &mut ens.momenta,
                    &cfg.target,
                    cfg.step_size,
                    &mut self.rng,
                    iteration,
                )?;
                ens.iteration = iteration;
            }
        }
        let n = before.nrows().max(1) as f64;
        diag.mean_speed = (&self.ensemble.positions - before)
            .row_iter()
            .map(|r| r.norm())
            .sum::<f64>()
            / n;
        Ok(diag)
    }
}

/// Runs `n_steps` steps from `initial`, keeping every iterate.
///
/// `n_steps = 0` returns just the initial state. The recorder, if any, is
/// called for the initial state and after every step.
pub fn run(
    kind: SamplerKind,
    cfg: &SamplerConfig,
    initial: DMatrix<f64>,
    n_steps: usize,
    mut recorder: Option<&mut dyn Recorder>,
) -> Result<Trajectory> {
    let mut sampler = Sampler::new(kind, cfg.clone(), initial)?;
    let mut traj = Trajectory {
        positions: vec![sampler.positions().clone()],
        diagnostics: Vec::with_capacity(n_steps),
    };
    if let Some(r) = recorder.as_deref_mut() {
        r.record(StepRecord {
            iteration: 0,
            ensemble: sampler.ensemble(),
            diagnostics: None,
        })?;
    }
    for _ in 0..n_steps {
        let diag = sampler.step()?;
        if let Some(r) = recorder.as_deref_mut() {
            r.record(StepRecord {
                iteration: diag.iteration,
                ensemble: sampler.ensemble(),
                diagnostics: Some(&diag),
            })?;
        }
        traj.positions.push(sampler.positions().clone());
        traj.diagnostics.push(diag);
    }
    Ok(traj)
}

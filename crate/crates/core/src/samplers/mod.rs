//! Particle samplers: accelerated SVGD, SVGD and the Langevin baselines.

mod asvgd;
mod config;
mod ensemble;
mod langevin;
mod restart;
mod run;
mod svgd;

pub use asvgd::{asvgd_step, AsvgdStepInfo};
pub use config::{DampingSchedule, SamplerConfig, SamplerKind};
pub use ensemble::{init_gaussian_particles, ParticleEnsemble};
pub use langevin::{mala_step, ula_step, uld_step};
pub use restart::{damping_coefficients, gradient_restart_stat, gradient_restart_trace};
pub use run::{run, Recorder, Sampler, StepDiagnostics, StepRecord, Trajectory};
pub use svgd::{svgd_direction_bilinear, svgd_direction_gaussian, svgd_step_bilinear, svgd_step_gaussian};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub(crate) fn ensure_finite(m: &DMatrix<f64>, iteration: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration })
    }
}

/// `diag(v) M`: scales row `i` of `M` by `v[i]`.
pub(crate) fn scale_rows(m: &mut DMatrix<f64>, v: &[f64]) {
    for (i, s) in v.iter().enumerate() {
        m.row_mut(i).scale_mut(*s);
    }
}

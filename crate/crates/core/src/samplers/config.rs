use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::targets::TargetSpec;

/// How the per-particle damping `α_i` of accelerated SVGD is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DampingSchedule {
    /// Nesterov damping `α_i = (c_i - 1) / (c_i + r - 1)` driven by a
    /// per-particle counter `c_i` that the restart heuristics reset to 1.
    /// `offset` is `r`; `r = 3` gives `(c - 1) / (c + 2)`.
    RestartNesterov {
        speed_restart: bool,
        gradient_restart: bool,
        offset: f64,
    },
    /// `α_i = β` for all particles, `β ∈ (0, 1)`.
    Constant(f64),
}

impl Default for DampingSchedule {
    fn default() -> Self {
        DampingSchedule::RestartNesterov {
            speed_restart: true,
            gradient_restart: true,
            offset: 3.0,
        }
    }
}

impl DampingSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DampingSchedule::Constant(beta) if !(beta > 0.0 && beta < 1.0) => Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("constant damping must lie in (0, 1), got {beta}"),
            }),
            DampingSchedule::RestartNesterov { offset, .. } if !(offset > 0.0 && offset.is_finite()) => {
                Err(Error::InvalidParameter {
                    name: "nesterov_offset",
                    reason: format!("must be positive, got {offset}"),
                })
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Asvgd,
    Svgd,
    Ula,
    Mala,
    Uld,
}

impl SamplerKind {
    pub const NAMES: [&'static str; 5] = ["asvgd", "svgd", "ula", "mala", "uld"];

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "asvgd" => SamplerKind::Asvgd,
            "svgd" => SamplerKind::Svgd,
            "ula" => SamplerKind::Ula,
            "mala" => SamplerKind::Mala,
            "uld" => SamplerKind::Uld,
            other => {
                return Err(Error::UnknownName {
                    kind: "sampler",
                    name: other.to_string(),
                    valid: Self::NAMES.to_vec(),
                })
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Asvgd => "asvgd",
            SamplerKind::Svgd => "svgd",
            SamplerKind::Ula => "ula",
            SamplerKind::Mala => "mala",
            SamplerKind::Uld => "uld",
        }
    }
}

/// Parameters shared by every sampler.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub kernel: KernelSpec,
    pub target: TargetSpec,
    /// Step size `τ > 0`.
    pub step_size: f64,
    /// Wasserstein regularisation `ε ≥ 0` in the `(K + εI)⁻¹` solve.
    pub regularization: f64,
    pub damping: DampingSchedule,
    pub seed: u64,
    pub n_steps: usize,
    /// Use the printed constant placement of the Gaussian-kernel SVGD update
    /// (`1/σ²` on the driving term) instead of the standard one.
    pub alg2_literal: bool,
    /// Gradient restart as printed: unscaled trace `tr(Vᵀ(K∇f + (K - diag(K1))X))`
    /// and a reset when it is negative. By default the trace is proportional to
    /// the rate of change of the KL energy and the reset happens when it is positive.
    pub restart_literal: bool,
    /// Keep the `V`-dependent interaction term in the ASVGD momentum update.
    pub include_interaction: bool,
}

impl SamplerConfig {
    pub fn new(kernel: KernelSpec, target: TargetSpec) -> Self {
        SamplerConfig {
            kernel,
            target,
            step_size: 0.1,
            regularization: 0.1,
            damping: DampingSchedule::default(),
            seed: 0,
            n_steps: 1000,
            alg2_literal: false,
            restart_literal: false,
            include_interaction: true,
        }
    }

    pub fn with_step_size(mut self, tau: f64) -> Self {
        self.step_size = tau;
        self
    }

    pub fn with_regularization(mut self, eps: f64) -> Self {
        self.regularization = eps;
        self
    }

    pub fn with_damping(mut self, damping: DampingSchedule) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_steps(mut self, n_steps: usize) -> Self {
        self.n_steps = n_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("step size must be positive, got {}", self.step_size),
            });
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("regularization must be nonnegative, got {}", self.regularization),
            });
        }
        if let (Some(k), Some(t)) = (self.kernel.dim(), self.target.dim()) {
            crate::error::check_dim("kernel vs target dimension", t, k)?;
        }
        self.damping.validate()
    }
}

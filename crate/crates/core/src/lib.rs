//! Accelerated Stein variational gradient descent.
//!
//! The crate provides particle samplers (accelerated SVGD, SVGD, ULA, MALA,
//! ULD), the mean-field dynamics of SVGD and accelerated SVGD restricted to
//! Gaussian families, spectral analysis of their linearisations, and sample
//! quality diagnostics.

pub mod diagnostics;
pub mod error;
pub mod gaussian;
pub mod kernels;
pub mod linalg;
pub mod samplers;
pub mod spectral;
pub mod targets;

pub use diagnostics::{empirical_moments, kl_estimate, KlMethod, MetricRecord};
pub use error::{Error, Result};
pub use kernels::{median_bandwidth, GramMatrix, KernelSpec};
pub use samplers::{DampingSchedule, ParticleEnsemble, Sampler, SamplerConfig, SamplerKind};
pub use targets::{builtin_target, GaussianTarget, TargetSpec};

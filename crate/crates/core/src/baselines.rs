//! Comparison particle filters.
//!
//! Both share the bootstrap machinery of [`crate::smc`]: same proposal, same
//! systematic resampling after every delivery, weights carried unchanged
//! across dropouts.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelEvent, DelayProfile};
use crate::error::Result;
use crate::models::SystemModel;
use crate::rng::SimRng;
use crate::smc::{run_particle_filter, ParticleTrace, Scheme, SmcConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Delay-unaware bootstrap filter.
    StandardPf,
    /// Bootstrap filter with the delay-mixture likelihood.
    PfRd,
}

/// Bootstrap filter that takes every delivered value as `z_k`.
pub fn standard_pf_run<M: SystemModel + ?Sized>(
    model: &M,
    events: &[ChannelEvent],
    steps: usize,
    config: SmcConfig,
    rng: &mut SimRng,
) -> Result<ParticleTrace> {
    let profile = DelayProfile::constant(0.0, 0)?;
    run_particle_filter(model, &profile, events, steps, config, Scheme::DelayIgnorant, rng)
}

/// Bootstrap filter weighting each particle by
/// `Σ_j γ̄^j N(y_k; h_{k-j}(x_{k-j}), R_{k-j})` over its own state history.
pub fn pf_rd_run<M: SystemModel + ?Sized>(
    model: &M,
    profile: &DelayProfile,
    events: &[ChannelEvent],
    steps: usize,
    config: SmcConfig,
    rng: &mut SimRng,
) -> Result<ParticleTrace> {
    run_particle_filter(model, profile, events, steps, config, Scheme::Mixture, rng)
}

pub fn run_baseline<M: SystemModel + ?Sized>(
    kind: BaselineKind,
    model: &M,
    profile: &DelayProfile,
    events: &[ChannelEvent],
    steps: usize,
    config: SmcConfig,
    rng: &mut SimRng,
) -> Result<ParticleTrace> {
    match kind {
        BaselineKind::StandardPf => standard_pf_run(model, events, steps, config, rng),
        BaselineKind::PfRd => pf_rd_run(model, profile, events, steps, config, rng),
    }
}

//! Delay-grouped sequential Monte Carlo filter.
//!
//! Each particle carries its last `N + 1` states and the delays it was
//! assigned over the last `N` steps. At a delivery step a particle draws the
//! hypothesis "the received value is `z_{k-j}`" from the prior delay
//! probabilities, with every delay that would re-consume a measurement the
//! particle already explained removed, and is then weighted by the
//! likelihood of its own lagged state. Particles sharing a hypothesis form
//! the delay group `j`.

mod particles;
mod run;

pub use particles::{
    systematic_indices, AssignStats, Bootstrap, DelayPosterior, Particle, ParticleSet, Proposal, WeightStats,
};
pub use run::{smc_run, write_diagnostics_csv, InvariantCounters, ParticleTrace, Resampling, SmcConfig, StepDiagnostics};

pub(crate) use run::{run_particle_filter, Scheme};

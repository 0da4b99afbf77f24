use std::io::Write;

use super::particles::{Bootstrap, DelayPosterior, ParticleSet};
use crate::channel::{delay_probabilities, ChannelEvent, DelayProbabilities, DelayProfile};
use crate::error::{Error, Result};
use crate::models::SystemModel;
use crate::rng::SimRng;
use crate::Vector;

/// Normalization tolerance for `Σ w̄`.
const NORMALIZATION_TOL: f64 = 1e-10;

/// When a particle filter resamples after a delivery.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    #[default]
    Always,
    /// Only when `ESS < fraction · N_s`.
    EssBelow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcConfig {
    pub particles: usize,
    pub resampling: Resampling,
}

impl SmcConfig {
    pub fn new(particles: usize) -> Self {
        SmcConfig { particles, resampling: Resampling::Always }
    }
}

/// Per-step record of a particle filter pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    /// ESS of the weights the estimate was computed from.
    pub ess: f64,
    pub collapsed: bool,
    pub resampled: bool,
    /// Group sizes after resampling, the `N_s'^j / N_s` heuristic.
    pub group_counts: Vec<usize>,
    /// `None` at dropout steps and for filters that do not assign delays.
    pub delay: Option<DelayPosterior>,
}

/// Invariant counters accumulated over a pass. All should stay zero except
/// `collapses` and `fully_excluded`, which are diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct InvariantCounters {
    pub weight_normalization: usize,
    pub group_closure: usize,
    pub exclusion: usize,
    pub mixture_bound: usize,
    pub collapses: usize,
    pub fully_excluded: usize,
}

impl InvariantCounters {
    pub fn violations(&self) -> usize {
        self.weight_normalization + self.group_closure + self.exclusion + self.mixture_bound
    }

    pub fn merge(&mut self, o: &InvariantCounters) {
        self.weight_normalization += o.weight_normalization;
        self.group_closure += o.group_closure;
        self.exclusion += o.exclusion;
        self.mixture_bound += o.mixture_bound;
        self.collapses += o.collapses;
        self.fully_excluded += o.fully_excluded;
    }
}

#[derive(Debug, Clone)]
pub struct ParticleTrace {
    /// Weighted particle mean at `k = 1..=steps`.
    pub estimates: Vec<Vector>,
    pub steps: Vec<StepDiagnostics>,
    pub invariants: InvariantCounters,
}

/// Weighting rule applied at delivery steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Scheme {
    /// Per-particle delay hypothesis with history exclusion.
    Grouped,
    /// Mixture likelihood over every lag.
    Mixture,
    /// Every delivery is taken to be the current measurement.
    DelayIgnorant,
}

/// Shared bootstrap particle filter loop. With `N = 0` and a delay-free
/// channel all schemes consume the generator identically and produce the
/// same floating-point results.
pub(crate) fn run_particle_filter<M: SystemModel + ?Sized>(
    model: &M,
    profile: &DelayProfile,
    events: &[ChannelEvent],
    steps: usize,
    config: SmcConfig,
    scheme: Scheme,
    rng: &mut SimRng,
) -> Result<ParticleTrace> {
    if events.len() != steps {
        return Err(Error::dims(format!("{} events for {steps} steps", events.len())));
    }
    let max_delay = match scheme {
        Scheme::DelayIgnorant => 0,
        _ => profile.max_delay(),
    };
    let mut set = ParticleSet::from_prior(model, config.particles, max_delay, rng)?;
    let mut proposal = Bootstrap::default();
    let mut counters = InvariantCounters::default();
    let mut estimates = Vec::with_capacity(steps);
    let mut diags = Vec::with_capacity(steps);

    for (i, event) in events.iter().enumerate() {
        let k = i + 1;
        let y = event.measurement();
        set.propagate(model, &mut proposal, y, rng);
        let mut collapsed = false;
        let mut delay = None;
        match y {
            None => set.handle_dropout(),
            Some(y) => {
                let stats = match scheme {
                    Scheme::Grouped => {
                        let probs = delay_probabilities(profile, k)?;
                        let a = set.assign_delays(&probs, rng)?;
                        counters.exclusion += a.exclusion_violations;
                        counters.fully_excluded += a.fully_excluded;
                        if set.group_sizes().iter().sum::<usize>() != set.len() {
                            counters.group_closure += 1;
                        }
                        set.weight_update(model, y)?
                    }
                    Scheme::Mixture => {
                        let probs = delay_probabilities(profile, k)?;
                        set.mixture_weight_update(model, &probs, y)?
                    }
                    Scheme::DelayIgnorant => {
                        let current = DelayProbabilities { step: k, gamma: vec![1.0], gamma_bar: vec![1.0], dropout: 0.0 };
                        set.assign_delays(&current, rng)?;
                        set.weight_update(model, y)?
                    }
                };
                collapsed = stats.collapsed;
                counters.collapses += stats.collapsed as usize;
                counters.mixture_bound += stats.mixture_bound_violations;
                if stats.normalization_error > NORMALIZATION_TOL {
                    counters.weight_normalization += 1;
                }
                if scheme == Scheme::Grouped {
                    delay = set.estimate_delay();
                }
            }
        }
        let estimate = set.mean();
        if !estimate.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step: k, reason: "non-finite particle mean".into() });
        }
        let ess = set.ess();
        let resampled = y.is_some()
            && match config.resampling {
                Resampling::Always => true,
                Resampling::EssBelow(f) => ess < f * set.len() as f64,
            };
        if resampled {
            set.resample(rng);
        }
        estimates.push(estimate);
        diags.push(StepDiagnostics {
            step: k,
            ess,
            collapsed,
            resampled,
            group_counts: if y.is_some() { set.group_sizes().to_vec() } else { Vec::new() },
            delay,
        });
    }
    Ok(ParticleTrace { estimates, steps: diags, invariants: counters })
}

/// Run the delay-grouped SMC filter over a channel trajectory.
pub fn smc_run<M: SystemModel + ?Sized>(
    model: &M,
    profile: &DelayProfile,
    events: &[ChannelEvent],
    steps: usize,
    config: SmcConfig,
    rng: &mut SimRng,
) -> Result<ParticleTrace> {
    run_particle_filter(model, profile, events, steps, config, Scheme::Grouped, rng)
}

/// CSV `k, ess, collapse_flag, group_count_0..group_count_N, jhat_map,
/// dhat_mean`. Dropout steps leave the delay fields empty and counts zero.
pub fn write_diagnostics_csv<W: Write>(writer: W, steps: &[StepDiagnostics], max_delay: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["k".to_string(), "ess".into(), "collapse_flag".into()];
    header.extend((0..=max_delay).map(|j| format!("group_count_{j}")));
    header.push("jhat_map".into());
    header.push("dhat_mean".into());
    w.write_record(&header)?;
    for d in steps {
        let mut row = vec![d.step.to_string(), d.ess.to_string(), (d.collapsed as u8).to_string()];
        row.extend((0..=max_delay).map(|j| d.group_counts.get(j).copied().unwrap_or(0).to_string()));
        match &d.delay {
            Some(p) => {
                row.push(p.map_estimate.to_string());
                row.push(p.mean_estimate.to_string());
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Systematic draw helper used by tests of offspring counts.
#[cfg(test)]
fn offspring_counts(weights: &[f64], rng: &mut SimRng) -> Vec<usize> {
    use rand::Rng;
    let mut c = vec![0; weights.len()];
    for a in super::systematic_indices(weights, rng.random()) {
        c[a] += 1;
    }
    c
}

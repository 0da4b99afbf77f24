use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FilterKind, ScenarioConfig};
use super::metrics::{rmse, time_average, time_average_present};
use crate::baselines::{pf_rd_run, standard_pf_run};
use crate::channel::{delay_probabilities, simulate_channel, ChannelEvent, DelayProfile};
use crate::error::{Error, Result};
use crate::gauss::{gaf_run, DropoutPolicy, GafConfig, GafDiagnostics, GafTrace};
use crate::models::{simulate_truth, simulate_truth_from, SystemModel, Trajectory};
use crate::rng::{substream, Purpose};
use crate::smc::{smc_run, InvariantCounters, ParticleTrace, SmcConfig};
use crate::Vector;

/// Output of one filter on one run.
#[derive(Debug, Clone)]
pub enum FilterTrace {
    Gaf(GafTrace),
    Particle(ParticleTrace),
}

impl FilterTrace {
    pub fn estimates(&self) -> Vec<Vector> {
        match self {
            FilterTrace::Gaf(t) => t.beliefs.iter().map(|b| b.mean.clone()).collect(),
            FilterTrace::Particle(t) => t.estimates.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub trace: FilterTrace,
    pub elapsed: Duration,
}

/// Everything produced by one Monte Carlo run.
#[derive(Debug)]
pub struct RunTrace {
    pub run: usize,
    pub truth: Trajectory,
    pub events: Vec<ChannelEvent>,
    pub filters: Vec<(FilterKind, Result<FilterOutput>)>,
    /// The GAF rerun with the dropout policy the config did not select.
    pub gaf_alternate: Option<Result<GafTrace>>,
}

fn other_policy(p: DropoutPolicy) -> DropoutPolicy {
    match p {
        DropoutPolicy::Predicted => DropoutPolicy::Skip,
        DropoutPolicy::Skip => DropoutPolicy::Predicted,
    }
}

fn purpose(kind: FilterKind) -> Purpose {
    match kind {
        FilterKind::Gaf => Purpose::Gaf,
        FilterKind::Smc => Purpose::Smc,
        FilterKind::StandardPf => Purpose::StandardPf,
        FilterKind::PfRd => Purpose::PfRd,
    }
}

fn run_filter(
    kind: FilterKind,
    model: &dyn SystemModel,
    profile: &DelayProfile,
    events: &[ChannelEvent],
    config: &ScenarioConfig,
    run: usize,
) -> Result<FilterOutput> {
    let steps = config.steps;
    let pf = SmcConfig { particles: config.particles, resampling: config.resampling };
    let mut rng = substream(config.seed, run as u64, purpose(kind));
    let start = Instant::now();
    let trace = match kind {
        FilterKind::Gaf => {
            let gc = GafConfig { dropout_policy: config.dropout_policy, mixture_covariance: config.mixture_covariance };
            FilterTrace::Gaf(gaf_run(model, profile, events, steps, gc)?)
        }
        FilterKind::Smc => FilterTrace::Particle(smc_run(model, profile, events, steps, pf, &mut rng)?),
        FilterKind::StandardPf => FilterTrace::Particle(standard_pf_run(model, events, steps, pf, &mut rng)?),
        FilterKind::PfRd => FilterTrace::Particle(pf_rd_run(model, profile, events, steps, pf, &mut rng)?),
    };
    Ok(FilterOutput { trace, elapsed: start.elapsed() })
}

/// Simulate truth and channel for run `run` and feed the same events to
/// every filter in the roster.
pub fn simulate_run(config: &ScenarioConfig, run: usize) -> Result<RunTrace> {
    let model = config.build_model()?;
    let profile = config.profile()?;
    simulate_run_with(config, model.as_ref(), &profile, run)
}

fn simulate_run_with(
    config: &ScenarioConfig,
    model: &dyn SystemModel,
    profile: &DelayProfile,
    run: usize,
) -> Result<RunTrace> {
    let mut truth_rng = substream(config.seed, run as u64, Purpose::Truth);
    let truth = match config.truth_x0() {
        Some(x0) => simulate_truth_from(model, x0, config.steps, &mut truth_rng)?,
        None => simulate_truth(model, config.steps, &mut truth_rng)?,
    };
    let mut channel_rng = substream(config.seed, run as u64, Purpose::Channel);
    let events = simulate_channel(profile, &truth.measurements, &mut channel_rng);
    let filters = config
        .filters
        .iter()
        .map(|&kind| (kind, run_filter(kind, model, profile, &events, config, run)))
        .collect();
    let gaf_alternate = config.filters.contains(&FilterKind::Gaf).then(|| {
        let gc = GafConfig {
            dropout_policy: other_policy(config.dropout_policy),
            mixture_covariance: config.mixture_covariance,
        };
        gaf_run(model, profile, &events, config.steps, gc)
    });
    Ok(RunTrace { run, truth, events, filters, gaf_alternate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRmse {
    pub component: String,
    /// `RMSE_k` for `k = 1..=steps`.
    pub per_step: Vec<f64>,
    pub time_averaged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub error: String,
}

/// Covariance health of the Gaussian filter summed over runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCounters {
    pub asymmetry: usize,
    pub not_psd: usize,
    pub max_jitter: f64,
}

impl CovarianceCounters {
    fn merge(&mut self, d: &GafDiagnostics) {
        self.asymmetry += d.asymmetry_violations;
        self.not_psd += d.psd_violations;
        self.max_jitter = self.max_jitter.max(d.max_jitter);
    }

    pub fn violations(&self) -> usize {
        self.asymmetry + self.not_psd
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub filter: FilterKind,
    pub rmse: Vec<ComponentRmse>,
    pub successful_runs: usize,
    /// Runs where this filter diverged; excluded from its RMSE.
    pub failures: Vec<RunFailure>,
    /// Total wall-clock seconds over successful runs.
    pub wall_time_secs: Option<f64>,
    /// `wall_time_secs` over that of the standard PF.
    pub relative_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particle_invariants: Option<InvariantCounters>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceCounters>,
}

impl FilterResult {
    pub fn component(&self, name: &str) -> Option<&ComponentRmse> {
        self.rmse.iter().find(|c| c.component == name)
    }

    /// Invariant violations of any kind.
    pub fn violations(&self) -> usize {
        self.particle_invariants.map_or(0, |c| c.violations()) + self.covariance.map_or(0, |c| c.violations())
    }
}

/// RMSE of the SMC delay estimates against the true delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRmse {
    /// Per step, over runs where something was delivered; `None` when
    /// every run dropped that step.
    pub map: Vec<Option<f64>>,
    pub mean: Vec<Option<f64>>,
    pub time_averaged_map: Option<f64>,
    pub time_averaged_mean: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub steps: usize,
    pub delivered: usize,
    pub dropped: usize,
    /// Deliveries by true delay `0..=N`.
    pub delay_histogram: Vec<usize>,
    pub empirical_dropout: f64,
    /// Mean over steps of the per-step dropout probability.
    pub expected_dropout: f64,
    /// Measurements delivered more than once (must be zero).
    pub repeated_deliveries: usize,
}

/// GAF accuracy under one dropout policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub policy: DropoutPolicy,
    pub successful_runs: usize,
    /// Time-averaged RMSE per error component.
    pub rmse: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub config: ScenarioConfig,
    pub filters: Vec<FilterResult>,
    /// The GAF under both dropout policies, configured one first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gaf_dropout_policies: Vec<PolicyResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay_rmse: Option<DelayRmse>,
    pub channel: ChannelSummary,
}

impl CampaignResult {
    pub fn filter(&self, kind: FilterKind) -> Option<&FilterResult> {
        self.filters.iter().find(|f| f.filter == kind)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Run every Monte Carlo run of the scenario and aggregate.
///
/// A filter diverging on one run is recorded and excluded from that
/// filter's statistics; the campaign fails only if some filter diverges on
/// every run.
pub fn run_campaign(config: &ScenarioConfig) -> Result<CampaignResult> {
    config.validate()?;
    let model = config.build_model()?;
    let profile = config.profile()?;
    let runs: Vec<RunTrace> = (0..config.mc_runs)
        .into_par_iter()
        .map(|r| simulate_run_with(config, model.as_ref(), &profile, r))
        .collect::<Result<_>>()?;
    aggregate(config, model.as_ref(), &profile, &runs)
}

fn aggregate(
    config: &ScenarioConfig,
    model: &dyn SystemModel,
    profile: &DelayProfile,
    runs: &[RunTrace],
) -> Result<CampaignResult> {
    let components = model.error_components();
    let mut filters = Vec::with_capacity(config.filters.len());
    let mut delay_rmse = None;
    for (slot, &kind) in config.filters.iter().enumerate() {
        let mut truth = Vec::new();
        let mut estimates = Vec::new();
        let mut failures = Vec::new();
        let mut elapsed = Duration::ZERO;
        let mut particle: Option<InvariantCounters> = None;
        let mut covariance: Option<CovarianceCounters> = None;
        let mut ok_runs = Vec::new();
        for run in runs {
            match &run.filters[slot].1 {
                Ok(out) => {
                    truth.push(run.truth.states[1..].to_vec());
                    estimates.push(out.trace.estimates());
                    elapsed += out.elapsed;
                    match &out.trace {
                        FilterTrace::Gaf(t) => covariance.get_or_insert_with(Default::default).merge(&t.diagnostics),
                        FilterTrace::Particle(t) => particle.get_or_insert_with(Default::default).merge(&t.invariants),
                    }
                    ok_runs.push((run, out));
                }
                Err(e) => failures.push(RunFailure { run: run.run, error: e.to_string() }),
            }
        }
        if ok_runs.is_empty() {
            return Err(Error::Divergence {
                step: 0,
                reason: format!("{kind} diverged on every run ({})", failures[0].error),
            });
        }
        let mut rmse_out = Vec::with_capacity(components.len());
        for c in &components {
            let per_step = rmse(&truth, &estimates, c)?;
            let time_averaged = time_average(&per_step, 0..per_step.len());
            rmse_out.push(ComponentRmse { component: c.name.clone(), per_step, time_averaged });
        }
        if kind == FilterKind::Smc {
            delay_rmse = Some(delay_rmse_of(&ok_runs, config.steps));
        }
        filters.push(FilterResult {
            filter: kind,
            rmse: rmse_out,
            successful_runs: ok_runs.len(),
            failures,
            wall_time_secs: config.timing.then_some(elapsed.as_secs_f64()),
            relative_time: None,
            particle_invariants: particle,
            covariance,
        });
    }
    if let Some(base) = filters.iter().find(|f| f.filter == FilterKind::StandardPf).and_then(|f| f.wall_time_secs) {
        if base > 0.0 {
            for f in &mut filters {
                f.relative_time = f.wall_time_secs.map(|t| t / base);
            }
        }
    }
    let mut gaf_dropout_policies = Vec::new();
    if let Some(gaf) = filters.iter().find(|f| f.filter == FilterKind::Gaf) {
        gaf_dropout_policies.push(PolicyResult {
            policy: config.dropout_policy,
            successful_runs: gaf.successful_runs,
            rmse: gaf.rmse.iter().map(|c| (c.component.clone(), c.time_averaged)).collect(),
        });
        gaf_dropout_policies.push(alternate_policy_result(config, &components, runs)?);
    }
    Ok(CampaignResult {
        config: config.clone(),
        filters,
        gaf_dropout_policies,
        delay_rmse,
        channel: channel_summary(profile, runs)?,
    })
}

fn alternate_policy_result(
    config: &ScenarioConfig,
    components: &[crate::models::ErrorComponent],
    runs: &[RunTrace],
) -> Result<PolicyResult> {
    let mut truth = Vec::new();
    let mut estimates = Vec::new();
    for run in runs {
        if let Some(Ok(t)) = &run.gaf_alternate {
            truth.push(run.truth.states[1..].to_vec());
            estimates.push(t.beliefs.iter().map(|b| b.mean.clone()).collect());
        }
    }
    let mut rmse_out = BTreeMap::new();
    if !truth.is_empty() {
        for c in components {
            let per_step = rmse(&truth, &estimates, c)?;
            rmse_out.insert(c.name.clone(), time_average(&per_step, 0..per_step.len()));
        }
    }
    Ok(PolicyResult { policy: other_policy(config.dropout_policy), successful_runs: truth.len(), rmse: rmse_out })
}

fn delay_rmse_of(runs: &[(&RunTrace, &FilterOutput)], steps: usize) -> DelayRmse {
    let mut sq_map = vec![0.0; steps];
    let mut sq_mean = vec![0.0; steps];
    let mut count = vec![0usize; steps];
    for (run, out) in runs {
        let FilterTrace::Particle(t) = &out.trace else { continue };
        for (i, (d, e)) in t.steps.iter().zip(&run.events).enumerate() {
            if let (Some(p), Some(true_delay)) = (&d.delay, e.true_delay()) {
                sq_map[i] += (p.map_estimate as f64 - true_delay as f64).powi(2);
                sq_mean[i] += (p.mean_estimate - true_delay as f64).powi(2);
                count[i] += 1;
            }
        }
    }
    let finish = |sq: &[f64]| -> Vec<Option<f64>> {
        sq.iter().zip(&count).map(|(s, c)| (*c > 0).then(|| (s / *c as f64).sqrt())).collect()
    };
    let map = finish(&sq_map);
    let mean = finish(&sq_mean);
    DelayRmse {
        time_averaged_map: time_average_present(&map),
        time_averaged_mean: time_average_present(&mean),
        map,
        mean,
        note: "dropout steps carry no delay estimate and are excluded; each step averages over the runs that \
               delivered a measurement there"
            .into(),
    }
}

fn channel_summary(profile: &DelayProfile, runs: &[RunTrace]) -> Result<ChannelSummary> {
    let mut histogram = vec![0; profile.max_delay() + 1];
    let mut delivered = 0;
    let mut dropped = 0;
    let mut repeated = 0;
    for run in runs {
        let mut used = std::collections::HashSet::new();
        for e in &run.events {
            match e.true_delay() {
                Some(d) => {
                    delivered += 1;
                    histogram[d] += 1;
                    if !used.insert(e.step - d) {
                        repeated += 1;
                    }
                }
                None => dropped += 1,
            }
        }
    }
    let steps = runs.first().map_or(0, |r| r.events.len());
    let mut expected = 0.0;
    for k in 1..=steps {
        expected += delay_probabilities(profile, k)?.dropout;
    }
    let total = (delivered + dropped).max(1);
    Ok(ChannelSummary {
        steps,
        delivered,
        dropped,
        delay_histogram: histogram,
        empirical_dropout: dropped as f64 / total as f64,
        expected_dropout: if steps > 0 { expected / steps as f64 } else { 0.0 },
        repeated_deliveries: repeated,
    })
}

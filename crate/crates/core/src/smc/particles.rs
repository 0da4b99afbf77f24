use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::channel::DelayProbabilities;
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, GaussianLogDensity};
use crate::models::SystemModel;
use crate::{Matrix, Vector};

/// Importance density for the state at step `k`.
pub trait Proposal<M: SystemModel + ?Sized> {
    /// Called once per step before any particle is drawn.
    fn prepare(&mut self, model: &M, k: usize);

    /// Draw `x_k` given `x_{k-1}` and, if one arrived, the received value.
    fn draw(&self, model: &M, k: usize, prev: &Vector, y: Option<&Vector>, rng: &mut dyn RngCore) -> Vector;

    /// `log p(x_k | x_{k-1}) - log q(x_k | x_{k-1}, y_k)`.
    fn log_ratio(&self, _model: &M, _k: usize, _x: &Vector, _prev: &Vector, _y: Option<&Vector>) -> f64 {
        0.0
    }
}

/// The transition prior as proposal; the density ratio is identically one.
#[derive(Debug, Clone, Default)]
pub struct Bootstrap {
    sqrt: Option<Matrix>,
}

impl<M: SystemModel + ?Sized> Proposal<M> for Bootstrap {
    fn prepare(&mut self, model: &M, k: usize) {
        self.sqrt = Some(psd_sqrt(&model.process_cov(k)));
    }

    fn draw(&self, model: &M, k: usize, prev: &Vector, _y: Option<&Vector>, rng: &mut dyn RngCore) -> Vector {
        let sqrt = self.sqrt.as_ref().expect("prepare is called before draw");
        let n = sqrt.ncols();
        let e = Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        model.transition(k, prev) + sqrt * e
    }
}

/// Owned copy of one particle, newest entries first.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    /// `x_k, x_{k-1}, …` as far back as the set keeps them.
    pub states: Vec<Vector>,
    /// Delay assigned at the current step, `None` if nothing was received.
    pub delay: Option<usize>,
    /// Delays assigned at steps `k-1, …, k-N`.
    pub delay_history: Vec<Option<usize>>,
    pub weight: f64,
}

/// Filtering estimate of the delay of the measurement received at step `k`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DelayPosterior {
    pub step: usize,
    /// `p̂(j | y_{1:k})` for `j = 0..=N̄`, normalized.
    pub pmf: Vec<f64>,
    /// `argmax_j pmf` (smallest `j` on ties).
    pub map_estimate: usize,
    /// `Σ_i w̄_i j_i`.
    pub mean_estimate: f64,
}

/// Outcome of one delay-assignment pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssignStats {
    /// Particles whose every delay was excluded and fell back to `γ̄`.
    pub fully_excluded: usize,
    /// Assignments that re-used an excluded delay without the fallback.
    pub exclusion_violations: usize,
}

/// Outcome of one weighting pass.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WeightStats {
    /// Every weight was zero or non-finite; weights were reset to uniform.
    pub collapsed: bool,
    /// `|Σ w̄ - 1|` after normalization.
    pub normalization_error: f64,
    /// Particles whose mixture weight fell below its largest component.
    pub mixture_bound_violations: usize,
}

/// Weighted particles with bounded state and delay histories.
///
/// Histories are rings shared by all particles: the state at step `t` lives
/// in slot `t mod (N+1)` and the delay assigned at step `t` in slot
/// `t mod N`.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    count: usize,
    state_dim: usize,
    max_delay: usize,
    step: usize,
    states: Vec<Vector>,
    history: Vec<Option<usize>>,
    delays: Vec<Option<usize>>,
    /// `γ̄^{j,i}` of each particle's current assignment.
    delay_probs: Vec<f64>,
    weights: Vec<f64>,
    log_ratio: Vec<f64>,
    group_sizes: Vec<usize>,
}

impl ParticleSet {
    /// `count` equally weighted draws from the model's initial distribution.
    pub fn from_prior<M, R>(model: &M, count: usize, max_delay: usize, rng: &mut R) -> Result<Self>
    where
        M: SystemModel + ?Sized,
        R: Rng + ?Sized,
    {
        if count == 0 {
            return Err(Error::invalid("particle count must be positive"));
        }
        let n = model.state_dim();
        let depth = max_delay + 1;
        let mean = model.initial_mean();
        let sqrt = psd_sqrt(&model.initial_cov());
        let mut states = vec![Vector::zeros(n); count * depth];
        for i in 0..count {
            let e = Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            states[i * depth] = &mean + &sqrt * e;
        }
        Ok(ParticleSet {
            count,
            state_dim: n,
            max_delay,
            step: 0,
            states,
            history: vec![None; count * max_delay],
            delays: vec![None; count],
            delay_probs: vec![0.0; count],
            weights: vec![1.0 / count as f64; count],
            log_ratio: vec![0.0; count],
            group_sizes: vec![0; depth],
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    /// `min(N, k-1)` at the current step.
    pub fn effective_max_delay(&self) -> usize {
        self.max_delay.min(self.step.saturating_sub(1))
    }

    /// Normalized weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Realized size of each delay group at the current step.
    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    fn depth(&self) -> usize {
        self.max_delay + 1
    }

    fn slot(&self, i: usize, lag: usize) -> usize {
        assert!(lag <= self.max_delay.min(self.step), "lag {lag} is outside the kept history");
        i * self.depth() + (self.step - lag) % self.depth()
    }

    /// `x^i_{k-lag}`.
    pub fn state(&self, i: usize, lag: usize) -> &Vector {
        &self.states[self.slot(i, lag)]
    }

    /// Delay assigned to particle `i` at the current step.
    pub fn delay(&self, i: usize) -> Option<usize> {
        self.delays[i]
    }

    /// Delay assigned to particle `i` at step `k - tau`, `1 ≤ tau ≤ N`.
    pub fn past_delay(&self, i: usize, tau: usize) -> Option<usize> {
        assert!(tau >= 1 && tau <= self.max_delay, "tau must lie in 1..=N");
        if tau > self.step {
            return None;
        }
        self.history[i * self.max_delay + (self.step - tau) % self.max_delay]
    }

    pub fn particle(&self, i: usize) -> Particle {
        let lags = self.max_delay.min(self.step);
        Particle {
            states: (0..=lags).map(|l| self.state(i, l).clone()).collect(),
            delay: self.delays[i],
            delay_history: (1..=self.max_delay).map(|t| self.past_delay(i, t)).collect(),
            weight: self.weights[i],
        }
    }

    /// Weighted mean of the current states.
    pub fn mean(&self) -> Vector {
        let mut m = Vector::zeros(self.state_dim);
        for i in 0..self.count {
            m.axpy(self.weights[i], self.state(i, 0), 1.0);
        }
        m
    }

    /// `1 / Σ w̄²`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Advance to step `k + 1`: draw each new state from `proposal`, shift
    /// the state history and commit the current delays to the delay history.
    pub fn propagate<M, P>(&mut self, model: &M, proposal: &mut P, y: Option<&Vector>, rng: &mut dyn RngCore)
    where
        M: SystemModel + ?Sized,
        P: Proposal<M> + ?Sized,
    {
        if self.max_delay > 0 && self.step > 0 {
            let slot = self.step % self.max_delay;
            for i in 0..self.count {
                self.history[i * self.max_delay + slot] = self.delays[i];
            }
        }
        self.delays.fill(None);
        self.group_sizes.fill(0);
        let k = self.step + 1;
        proposal.prepare(model, k);
        let depth = self.depth();
        for i in 0..self.count {
            let prev = &self.states[i * depth + self.step % depth];
            let x = proposal.draw(model, k, prev, y, rng);
            self.log_ratio[i] = proposal.log_ratio(model, k, &x, prev, y);
            self.states[i * depth + k % depth] = x;
        }
        self.step = k;
    }

    /// Delays `d_{k-τ} + τ` that particle `i` may no longer be assigned.
    fn excluded(&self, i: usize, n_bar: usize) -> impl Iterator<Item = usize> + '_ {
        (1..=n_bar).filter_map(move |tau| self.past_delay(i, tau).map(|d| d + tau)).filter(move |j| *j <= n_bar)
    }

    /// Draw a delay hypothesis for every particle by inverse CDF with one
    /// uniform each. Nothing is drawn when `N̄ = 0`.
    pub fn assign_delays<R: Rng + ?Sized>(&mut self, probs: &DelayProbabilities, rng: &mut R) -> Result<AssignStats> {
        let n_bar = self.effective_max_delay();
        if probs.step != self.step || probs.gamma_bar.len() != n_bar + 1 {
            return Err(Error::dims(format!(
                "particles at step {} with N̄ = {n_bar}, probabilities for step {} with {} entries",
                self.step,
                probs.step,
                probs.gamma_bar.len()
            )));
        }
        let mut stats = AssignStats::default();
        self.group_sizes.fill(0);
        if n_bar == 0 {
            self.delays.fill(Some(0));
            self.delay_probs.fill(1.0);
            self.group_sizes[0] = self.count;
            return Ok(stats);
        }
        let mut gamma = vec![0.0; n_bar + 1];
        for i in 0..self.count {
            gamma.copy_from_slice(&probs.gamma_bar);
            for j in self.excluded(i, n_bar) {
                gamma[j] = 0.0;
            }
            let mut total: f64 = gamma.iter().sum();
            let fallback = !(total > 0.0);
            if fallback {
                stats.fully_excluded += 1;
                gamma.copy_from_slice(&probs.gamma_bar);
                total = gamma.iter().sum();
            }
            let u: f64 = rng.random();
            let target = u * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (j, g) in gamma.iter().enumerate() {
                acc += g;
                if *g > 0.0 {
                    chosen = Some(j);
                    if target < acc {
                        break;
                    }
                }
            }
            let j = chosen.expect("at least one delay has positive probability");
            if !fallback && self.excluded(i, n_bar).any(|e| e == j) {
                stats.exclusion_violations += 1;
            }
            self.delays[i] = Some(j);
            self.delay_probs[i] = gamma[j] / total;
            self.group_sizes[j] += 1;
        }
        Ok(stats)
    }

    fn normalize(&mut self, log_w: Vec<f64>) -> WeightStats {
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut stats = WeightStats::default();
        if max.is_finite() {
            let mut sum = 0.0;
            for (w, l) in self.weights.iter_mut().zip(&log_w) {
                *w = (l - max).exp();
                sum += *w;
            }
            if sum.is_finite() && sum > 0.0 {
                for w in &mut self.weights {
                    *w /= sum;
                }
            } else {
                stats.collapsed = true;
            }
        } else {
            stats.collapsed = true;
        }
        if stats.collapsed {
            self.weights.fill(1.0 / self.count as f64);
        }
        stats.normalization_error = (self.weights.iter().sum::<f64>() - 1.0).abs();
        stats
    }

    fn log_prior(&self, i: usize) -> f64 {
        self.weights[i].ln() + self.log_ratio[i]
    }

    /// Per-lag likelihood densities `N(·; 0, R_{k-j})` for `j = 0..=n_bar`.
    fn densities<M: SystemModel + ?Sized>(&self, model: &M, n_bar: usize) -> Result<Vec<GaussianLogDensity>> {
        (0..=n_bar)
            .map(|j| {
                GaussianLogDensity::new(&model.meas_cov(self.step - j)).ok_or_else(|| Error::Divergence {
                    step: self.step,
                    reason: format!("measurement covariance at step {} is not positive definite", self.step - j),
                })
            })
            .collect()
    }

    fn log_likelihood<M: SystemModel + ?Sized>(
        &self,
        model: &M,
        dens: &[GaussianLogDensity],
        i: usize,
        j: usize,
        y: &Vector,
    ) -> f64 {
        let k = self.step;
        let r = model.measurement_residual(y, &model.measurement(k - j, self.state(i, j)));
        let l = dens[j].log_pdf(&r);
        if l.is_nan() {
            f64::NEG_INFINITY
        } else {
            l
        }
    }

    /// Multiply every weight by the likelihood of `y` under the particle's
    /// own delay hypothesis and normalize.
    pub fn weight_update<M: SystemModel + ?Sized>(&mut self, model: &M, y: &Vector) -> Result<WeightStats> {
        let n_bar = self.delays.iter().flatten().copied().max().unwrap_or(0);
        if self.delays.iter().any(|d| d.is_none()) {
            return Err(Error::invalid("weight update before delays were assigned"));
        }
        let dens = self.densities(model, n_bar)?;
        let log_w: Vec<f64> = (0..self.count)
            .map(|i| {
                let j = self.delays[i].expect("checked above");
                self.log_prior(i) + self.log_likelihood(model, &dens, i, j, y)
            })
            .collect();
        Ok(self.normalize(log_w))
    }

    /// Weight by `Σ_j γ̄^j N(y; h_{k-j}(x^i_{k-j}), R_{k-j})` over every
    /// lag the particle keeps, without assigning delays.
    pub fn mixture_weight_update<M: SystemModel + ?Sized>(
        &mut self,
        model: &M,
        probs: &DelayProbabilities,
        y: &Vector,
    ) -> Result<WeightStats> {
        let n_bar = self.effective_max_delay();
        if probs.step != self.step || probs.gamma_bar.len() != n_bar + 1 {
            return Err(Error::dims("delay probabilities do not match the particle set"));
        }
        let dens = self.densities(model, n_bar)?;
        let log_gamma: Vec<f64> = probs.gamma_bar.iter().map(|g| g.ln()).collect();
        let mut bound_violations = 0;
        let mut terms = vec![0.0; n_bar + 1];
        let log_w: Vec<f64> = (0..self.count)
            .map(|i| {
                if n_bar == 0 {
                    return self.log_prior(i) + self.log_likelihood(model, &dens, i, 0, y);
                }
                for (j, t) in terms.iter_mut().enumerate() {
                    *t = log_gamma[j] + self.log_likelihood(model, &dens, i, j, y);
                }
                let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mix = if max.is_finite() {
                    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
                } else {
                    max
                };
                if mix < max - 1e-12 * max.abs().max(1.0) {
                    bound_violations += 1;
                }
                self.log_prior(i) + mix
            })
            .collect();
        let mut stats = self.normalize(log_w);
        stats.mixture_bound_violations = bound_violations;
        Ok(stats)
    }

    /// Nothing arrived: weights carry over, the step records no delay.
    pub fn handle_dropout(&mut self) {
        self.delays.fill(None);
        self.group_sizes.fill(0);
        if self.log_ratio.iter().any(|r| *r != 0.0) {
            let log_w: Vec<f64> = (0..self.count).map(|i| self.log_prior(i)).collect();
            self.normalize(log_w);
        }
    }

    /// Grouped delay posterior `p̂(j) ∝ Σ_{i ∈ group j} w̄_i γ̄^{j,i}`, or
    /// `None` when no delays are assigned at this step.
    pub fn estimate_delay(&self) -> Option<DelayPosterior> {
        let n_bar = self.effective_max_delay();
        let mut pmf = vec![0.0; n_bar + 1];
        let mut mean = 0.0;
        for i in 0..self.count {
            let j = self.delays[i]?;
            pmf[j] += self.weights[i] * self.delay_probs[i];
            mean += self.weights[i] * j as f64;
        }
        let total: f64 = pmf.iter().sum();
        if total > 0.0 {
            pmf.iter_mut().for_each(|p| *p /= total);
        }
        let mut map = 0;
        for (j, p) in pmf.iter().enumerate() {
            if *p > pmf[map] {
                map = j;
            }
        }
        Some(DelayPosterior { step: self.step, pmf, map_estimate: map, mean_estimate: mean })
    }

    /// Systematic resampling; offspring inherit both histories and the
    /// current assignment, weights become uniform, group sizes are recounted.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let idx = systematic_indices(&self.weights, rng.random());
        let depth = self.depth();
        let nd = self.max_delay;
        let mut states = Vec::with_capacity(self.states.len());
        let mut history = Vec::with_capacity(self.history.len());
        let mut delays = Vec::with_capacity(self.count);
        let mut delay_probs = Vec::with_capacity(self.count);
        for &a in &idx {
            states.extend_from_slice(&self.states[a * depth..(a + 1) * depth]);
            history.extend_from_slice(&self.history[a * nd..(a + 1) * nd]);
            delays.push(self.delays[a]);
            delay_probs.push(self.delay_probs[a]);
        }
        self.states = states;
        self.history = history;
        self.delays = delays;
        self.delay_probs = delay_probs;
        self.weights.fill(1.0 / self.count as f64);
        self.log_ratio.fill(0.0);
        self.group_sizes.fill(0);
        for d in self.delays.iter().flatten() {
            self.group_sizes[*d] += 1;
        }
    }
}

/// Ancestor indices for systematic resampling with offset `u ∈ [0, 1)`:
/// positions `(m + u) / n`, `m = 0..n`, through the weight CDF.
pub fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cdf = weights[0];
    let mut a = 0;
    for m in 0..n {
        let pos = (m as f64 + u) / n as f64;
        while pos >= cdf && a + 1 < n {
            a += 1;
            cdf += weights[a];
        }
        out.push(a);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{delay_probabilities, DelayProfile};
    use crate::models::LinearGaussian;
    use crate::rng::seeded;

    fn scalar() -> LinearGaussian {
        LinearGaussian::scalar(0.9, 1.0, 0.5, 0.2, 0.0, 1.0)
    }

    fn set_at_step(k: usize, count: usize, max_delay: usize) -> ParticleSet {
        let m = scalar();
        let mut rng = seeded(1);
        let mut s = ParticleSet::from_prior(&m, count, max_delay, &mut rng).unwrap();
        for _ in 0..k {
            s.propagate(&m, &mut Bootstrap::default(), None, &mut rng);
        }
        s
    }

    #[test]
    fn zero_process_noise_propagates_exactly() {
        let m = LinearGaussian::scalar(0.5, 1.0, 0.0, 1.0, 2.0, 1.0);
        let mut rng = seeded(3);
        let mut s = ParticleSet::from_prior(&m, 10, 2, &mut rng).unwrap();
        let before: Vec<f64> = (0..10).map(|i| s.state(i, 0)[0]).collect();
        s.propagate(&m, &mut Bootstrap::default(), None, &mut rng);
        for (i, b) in before.iter().enumerate() {
            assert_eq!(s.state(i, 0)[0], 0.5 * b);
            assert_eq!(s.state(i, 1)[0], *b);
        }
    }

    #[test]
    fn systematic_uniform_weights_one_offspring_each() {
        let w = vec![0.25; 4];
        for u in [0.0, 0.3, 0.999] {
            assert_eq!(systematic_indices(&w, u), vec![0, 1, 2, 3]);
        }
        assert_eq!(systematic_indices(&[0.0, 1.0, 0.0], 0.5), vec![1, 1, 1]);
    }

    #[test]
    fn exclusion_after_delay_one() {
        // N = 3, step 3 so N̄ = 2; every particle took delay 1 at step 2
        let mut s = set_at_step(2, 1000, 3);
        let probs2 = delay_probabilities(&DelayProfile::constant(0.8, 3).unwrap(), 2).unwrap();
        let mut rng = seeded(9);
        // force delay 1 at step 2
        let forced = DelayProbabilities { gamma_bar: vec![0.0, 1.0], ..probs2 };
        s.assign_delays(&forced, &mut rng).unwrap();
        assert!(s.delays.iter().all(|d| *d == Some(1)));
        s.propagate(&scalar(), &mut Bootstrap::default(), None, &mut rng);
        let probs3 = delay_probabilities(&DelayProfile::constant(0.8, 3).unwrap(), 3).unwrap();
        let stats = s.assign_delays(&probs3, &mut rng).unwrap();
        assert_eq!(stats, AssignStats::default());
        assert_eq!(s.group_sizes()[2], 0);
        for i in 0..s.len() {
            assert_eq!(s.past_delay(i, 1), Some(1));
            let expected = probs3.gamma_bar[s.delay(i).unwrap()] / (probs3.gamma_bar[0] + probs3.gamma_bar[1]);
            assert!((s.delay_probs[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn dropout_keeps_weights_and_records_no_delay() {
        let mut s = set_at_step(1, 5, 2);
        s.weights = vec![0.1, 0.2, 0.3, 0.15, 0.25];
        let before = s.weights.clone();
        s.handle_dropout();
        assert_eq!(s.weights, before);
        assert!(s.delays.iter().all(|d| d.is_none()));
        assert!(s.estimate_delay().is_none());
    }

    #[test]
    fn weight_ratio_is_likelihood_ratio() {
        let m = scalar();
        let mut s = set_at_step(2, 2, 1);
        // same history for both particles
        let (a, b) = (s.states[0].clone(), s.states[1].clone());
        s.states[2] = a.clone();
        s.states[3] = b.clone();
        s.delays = vec![Some(0), Some(1)];
        s.delay_probs = vec![0.5, 0.5];
        let y = Vector::from_element(1, 0.7);
        s.weight_update(&m, &y).unwrap();
        let lik = |x: f64| (-(0.7 - x).powi(2) / (2.0 * 0.2)).exp();
        let ratio = s.weights[0] / s.weights[1];
        assert!((ratio - lik(s.state(0, 0)[0]) / lik(s.state(0, 1)[0])).abs() < 1e-10 * ratio);
    }

    #[test]
    fn collapse_resets_to_uniform() {
        let m = scalar();
        let mut s = set_at_step(1, 4, 0);
        s.delays.fill(Some(0));
        let stats = s.weight_update(&m, &Vector::from_element(1, 1e200)).unwrap();
        assert!(stats.collapsed);
        assert!(s.weights.iter().all(|w| *w == 0.25));
    }

    #[test]
    fn delay_posterior_concentrates() {
        let mut s = set_at_step(3, 4, 3);
        s.delays = vec![Some(2); 4];
        s.delay_probs = vec![0.3; 4];
        let d = s.estimate_delay().unwrap();
        assert_eq!(d.pmf, vec![0.0, 0.0, 1.0]);
        assert_eq!(d.map_estimate, 2);
        assert!((d.mean_estimate - 2.0).abs() < 1e-12);
    }
}

//! Poisson delay/dropout measurement channel.
//!
//! At every step `k` the channel draws a candidate delay `d ~ Poisson(λ_k)`.
//! The raw measurement `z_{k-d}` is delivered when `d` does not exceed the
//! effective bound `min(N, k-1)` and `z_{k-d}` has not been delivered yet;
//! otherwise nothing arrives at step `k`. At most one measurement is
//! received per step and no measurement is ever received twice.
//!
//! [`delay_probabilities`] gives the closed-form probability that the
//! reception at step `k` carries delay `j`, together with the dropout
//! probability.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Channel parameters: per-step Poisson mean and maximum permissible delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayProfile {
    lambda: Vec<f64>,
    max_delay: usize,
}

impl DelayProfile {
    /// Time-varying schedule; entry `i` applies to step `i + 1` and the last
    /// entry is held for all later steps. A single entry is broadcast.
    pub fn new(lambda: Vec<f64>, max_delay: usize) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::invalid("lambda schedule is empty"));
        }
        if let Some(bad) = lambda.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {bad}")));
        }
        Ok(DelayProfile { lambda, max_delay })
    }

    pub fn constant(lambda: f64, max_delay: usize) -> Result<Self> {
        Self::new(vec![lambda], max_delay)
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    pub fn schedule(&self) -> &[f64] {
        &self.lambda
    }

    /// `λ_k` for a 1-indexed step.
    pub fn lambda_at(&self, k: usize) -> f64 {
        let i = k.saturating_sub(1).min(self.lambda.len() - 1);
        self.lambda[i]
    }

    /// `min(N, k-1)`: no measurement predates step 1.
    pub fn effective_max_delay(&self, k: usize) -> usize {
        self.max_delay.min(k.saturating_sub(1))
    }
}

/// `e^{-λ} λ^j / j!`, evaluated in log space.
pub fn poisson_pmf(lambda: f64, j: usize) -> Result<f64> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid(format!("poisson mean must be finite and >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(if j == 0 { 1.0 } else { 0.0 });
    }
    let j_f = j as f64;
    Ok((-lambda + j_f * lambda.ln() - ln_factorial(j as u64)).exp())
}

/// Prior delay/dropout probabilities of the reception at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProbabilities {
    pub step: usize,
    /// `γ_k^j` for `j = 0..=min(N, k-1)`.
    pub gamma: Vec<f64>,
    /// `γ` renormalized over delivered outcomes.
    pub gamma_bar: Vec<f64>,
    /// `1 - Σ_j γ_k^j`.
    pub dropout: f64,
}

impl DelayProbabilities {
    pub fn effective_max_delay(&self) -> usize {
        self.gamma.len() - 1
    }

    /// Probability that the step is delivered at all.
    pub fn delivery(&self) -> f64 {
        self.gamma.iter().sum()
    }
}

/// Delay probabilities at step `k` (1-indexed).
///
/// `γ^0 = e^{-λ_k}` and for `j > 0`
/// `γ^j = P_{λ_k}(j) · Π_{i=1..j} (1 - P_{λ_{k-i}}(j - i))`: the candidate
/// draw at step `k` is `j` and none of the steps in between already consumed
/// `z_{k-j}`.
pub fn delay_probabilities(profile: &DelayProfile, k: usize) -> Result<DelayProbabilities> {
    if k == 0 {
        return Err(Error::invalid("steps are 1-indexed"));
    }
    let n_bar = profile.effective_max_delay(k);
    let mut gamma = Vec::with_capacity(n_bar + 1);
    for j in 0..=n_bar {
        let mut g = poisson_pmf(profile.lambda_at(k), j)?;
        for i in 1..=j {
            g *= 1.0 - poisson_pmf(profile.lambda_at(k - i), j - i)?;
        }
        gamma.push(g);
    }
    let total: f64 = gamma.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid(format!(
            "no delivery outcome has positive probability at step {k}"
        )));
    }
    let gamma_bar = gamma.iter().map(|g| g / total).collect();
    Ok(DelayProbabilities { step: k, gamma, gamma_bar, dropout: (1.0 - total).max(0.0) })
}

/// What arrived at the estimator at one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// `value` is the raw measurement `z_{k - true_delay}`. The estimator
    /// never sees `true_delay`; it is kept for evaluation.
    Delivered { value: Vector, true_delay: usize },
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEvent {
    pub step: usize,
    pub outcome: Outcome,
}

impl ChannelEvent {
    pub fn measurement(&self) -> Option<&Vector> {
        match &self.outcome {
            Outcome::Delivered { value, .. } => Some(value),
            Outcome::Dropped => None,
        }
    }

    pub fn true_delay(&self) -> Option<usize> {
        match self.outcome {
            Outcome::Delivered { true_delay, .. } => Some(true_delay),
            Outcome::Dropped => None,
        }
    }

    /// Index of the raw measurement that was delivered, if any.
    pub fn source_step(&self) -> Option<usize> {
        self.true_delay().map(|d| self.step - d)
    }
}

#[derive(Debug, Clone)]
struct Pending {
    step: usize,
    value: Vector,
    delivered: bool,
}

/// Sender-side buffer of the last `N + 1` raw measurements and whether each
/// has already gone through.
#[derive(Debug, Clone)]
pub struct ChannelState {
    max_delay: usize,
    pending: VecDeque<Pending>,
    last_step: usize,
}

impl ChannelState {
    pub fn new(max_delay: usize) -> Self {
        ChannelState { max_delay, pending: VecDeque::with_capacity(max_delay + 1), last_step: 0 }
    }

    pub fn buffered(&self) -> usize {
        self.pending.len()
    }

    /// One channel step with a Poisson draw from `rng`.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        profile: &DelayProfile,
        k: usize,
        z_k: Vector,
        rng: &mut R,
    ) -> ChannelEvent {
        let draw = sample_poisson(profile.lambda_at(k), rng);
        self.step_with_draw(profile, k, z_k, draw)
    }

    /// One channel step with a given candidate delay.
    pub fn step_with_draw(
        &mut self,
        profile: &DelayProfile,
        k: usize,
        z_k: Vector,
        draw: u64,
    ) -> ChannelEvent {
        debug_assert_eq!(k, self.last_step + 1, "channel steps must be consecutive");
        self.last_step = k;
        self.pending.push_back(Pending { step: k, value: z_k, delivered: false });
        while self.pending.len() > self.max_delay + 1 {
            self.pending.pop_front();
        }

        let n_bar = profile.effective_max_delay(k) as u64;
        let outcome = if draw > n_bar {
            Outcome::Dropped
        } else {
            let source = k - draw as usize;
            match self.pending.iter_mut().find(|p| p.step == source) {
                Some(p) if !p.delivered => {
                    p.delivered = true;
                    Outcome::Delivered { value: p.value.clone(), true_delay: draw as usize }
                }
                _ => Outcome::Dropped,
            }
        };
        ChannelEvent { step: k, outcome }
    }
}

fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let d = Poisson::new(lambda).expect("validated lambda");
    let x: f64 = d.sample(rng);
    x as u64
}

/// Run the channel over raw measurements `z_1..z_K`.
pub fn simulate_channel<R: Rng + ?Sized>(
    profile: &DelayProfile,
    measurements: &[Vector],
    rng: &mut R,
) -> Vec<ChannelEvent> {
    let mut state = ChannelState::new(profile.max_delay());
    measurements
        .iter()
        .enumerate()
        .map(|(i, z)| state.step(profile, i + 1, z.clone(), rng))
        .collect()
}

/// Lag statistic of the modified measurement noise.
#[derive(Debug, Clone)]
pub struct LagStatistic {
    pub lag: usize,
    /// Sample `E[ν_k ν_{k-lag}ᵀ]`.
    pub value: Matrix,
    /// Batch-means standard error of each entry.
    pub std_error: Matrix,
    /// Theoretical value: `mean_k Σ_t γ_k^t R` at lag 0, zero otherwise.
    pub target: Matrix,
}

impl LagStatistic {
    /// Largest `|value - target| / std_error` over entries.
    pub fn max_z(&self) -> f64 {
        self.value
            .iter()
            .zip(self.target.iter())
            .zip(self.std_error.iter())
            .map(|((v, t), s)| if *s > 0.0 { (v - t).abs() / s } else if v == t { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

const BATCHES: usize = 100;

/// Sample autocovariance of `ν_k = Σ_j β_k^j v_{k-j}` at lags `0..=max_lag`.
///
/// `noise[i]` is the raw measurement noise `v_{i+1}` injected when the
/// events were generated. `ν_k` is zero at dropout steps.
pub fn modified_noise_autocorrelation(
    events: &[ChannelEvent],
    noise: &[Vector],
    profile: &DelayProfile,
    noise_cov: &Matrix,
    max_lag: usize,
) -> Result<Vec<LagStatistic>> {
    if events.len() != noise.len() {
        return Err(Error::dims(format!(
            "{} channel events but {} noise samples",
            events.len(),
            noise.len()
        )));
    }
    if events.len() <= max_lag {
        return Err(Error::invalid("sequence shorter than the requested lag"));
    }
    let nz = noise_cov.nrows();
    let nu: Vec<Vector> = events
        .iter()
        .map(|e| match e.source_step() {
            Some(src) => noise[src - 1].clone(),
            None => Vector::zeros(nz),
        })
        .collect();

    let mut gamma_sum = 0.0;
    for k in 1..=events.len() {
        gamma_sum += delay_probabilities(profile, k)?.delivery();
    }
    let lag0_target = noise_cov * (gamma_sum / events.len() as f64);

    let mut out = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let products: Vec<Matrix> =
            (lag..nu.len()).map(|k| &nu[k] * nu[k - lag].transpose()).collect();
        let (value, std_error) = batch_means(&products, nz);
        let target = if lag == 0 { lag0_target.clone() } else { Matrix::zeros(nz, nz) };
        out.push(LagStatistic { lag, value, std_error, target });
    }
    Ok(out)
}

fn batch_means(samples: &[Matrix], nz: usize) -> (Matrix, Matrix) {
    let n = samples.len();
    let mean = samples.iter().fold(Matrix::zeros(nz, nz), |acc, m| acc + m) / n as f64;
    let batches = if n >= 10 * BATCHES { BATCHES } else { n };
    let size = n / batches;
    let mut var = Matrix::zeros(nz, nz);
    for b in 0..batches {
        let chunk = &samples[b * size..(b + 1) * size];
        let bm = chunk.iter().fold(Matrix::zeros(nz, nz), |acc, m| acc + m) / size as f64;
        var += (bm - &mean).map(|d| d * d);
    }
    var /= (batches - 1).max(1) as f64;
    let se = var.map(|v| (v / batches as f64).sqrt());
    (mean, se)
}

/// CSV trace: `k, delivered, true_delay, y0..y{nz-1}`; dropped steps carry
/// `true_delay = -1` and empty measurement fields.
pub fn write_trace_csv<W: Write>(writer: W, events: &[ChannelEvent], nz: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["k".to_string(), "delivered".to_string(), "true_delay".to_string()];
    header.extend((0..nz).map(|i| format!("y{i}")));
    w.write_record(&header)?;
    for e in events {
        let mut row = vec![e.step.to_string()];
        match &e.outcome {
            Outcome::Delivered { value, true_delay } => {
                row.push("1".into());
                row.push(true_delay.to_string());
                row.extend(value.iter().map(|v| v.to_string()));
            }
            Outcome::Dropped => {
                row.push("0".into());
                row.push("-1".into());
                row.extend(std::iter::repeat_n(String::new(), nz));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn z(k: usize) -> Vector {
        Vector::from_element(1, k as f64)
    }

    #[test]
    fn pmf_values() {
        assert_eq!(poisson_pmf(0.0, 0).unwrap(), 1.0);
        assert_eq!(poisson_pmf(0.0, 3).unwrap(), 0.0);
        assert_relative_eq!(poisson_pmf(0.7, 1).unwrap(), 0.347_609_712_653_986_66, epsilon = 1e-14);
        assert!(poisson_pmf(-0.1, 0).is_err());
        assert!(poisson_pmf(f64::NAN, 0).is_err());
        // no overflow for large j
        assert!(poisson_pmf(3.0, 400).unwrap() >= 0.0);
    }

    #[test]
    fn pmf_mode_at_three() {
        let p: Vec<f64> = (0..10).map(|j| poisson_pmf(3.0, j).unwrap()).collect();
        // λ = 3 has tied modes at 2 and 3; decreasing away from them
        assert_relative_eq!(p[2], p[3], epsilon = 1e-15);
        for j in 0..2 {
            assert!(p[j] < p[j + 1]);
        }
        for j in 3..9 {
            assert!(p[j] > p[j + 1]);
        }
    }

    #[test]
    fn delay_probabilities_steady_state() {
        let profile = DelayProfile::constant(0.8, 3).unwrap();
        for k in 4..8 {
            let p = delay_probabilities(&profile, k).unwrap();
            assert_eq!(p.gamma.len(), 4);
            assert_relative_eq!(p.gamma[0], 0.449_328_964_117_221_56, epsilon = 1e-14);
            assert_relative_eq!(p.gamma[1], 0.197_945_956_898_052_94, epsilon = 1e-14);
            assert_relative_eq!(p.gamma[2], 0.050_716_670_194_679_01, epsilon = 1e-14);
            assert_relative_eq!(p.gamma[3], 0.011_579_829_373_979_477, epsilon = 1e-14);
            assert_relative_eq!(p.dropout, 0.290_428_579_416_067_03, epsilon = 1e-13);
        }
    }

    #[test]
    fn start_up_truncation() {
        let profile = DelayProfile::constant(0.8, 3).unwrap();
        assert_eq!(delay_probabilities(&profile, 1).unwrap().gamma.len(), 1);
        assert_eq!(delay_probabilities(&profile, 2).unwrap().gamma.len(), 2);
        let p1 = delay_probabilities(&profile, 1).unwrap();
        assert_eq!(p1.gamma_bar, vec![1.0]);
        assert!(delay_probabilities(&profile, 0).is_err());
    }

    #[test]
    fn zero_lambda_channel_is_perfect() {
        let profile = DelayProfile::constant(0.0, 4).unwrap();
        let p = delay_probabilities(&profile, 10).unwrap();
        assert_eq!(p.gamma, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.dropout, 0.0);

        let zs: Vec<Vector> = (1..=20).map(z).collect();
        let events = simulate_channel(&profile, &zs, &mut seeded(1));
        for (i, e) in events.iter().enumerate() {
            assert_eq!(e.outcome, Outcome::Delivered { value: z(i + 1), true_delay: 0 });
        }
    }

    #[test]
    fn time_varying_schedule_uses_past_lambdas() {
        let profile = DelayProfile::new(vec![0.2, 0.5, 1.5], 2).unwrap();
        let p = delay_probabilities(&profile, 3).unwrap();
        let pm = |l: f64, j: usize| poisson_pmf(l, j).unwrap();
        assert_relative_eq!(p.gamma[1], pm(1.5, 1) * (1.0 - pm(0.5, 0)), epsilon = 1e-15);
        assert_relative_eq!(
            p.gamma[2],
            pm(1.5, 2) * (1.0 - pm(0.5, 1)) * (1.0 - pm(0.2, 0)),
            epsilon = 1e-15
        );
        // held past the end of the schedule
        assert_eq!(profile.lambda_at(50), 1.5);
    }

    #[test]
    fn forced_draws_reproduce_reference_sequence() {
        let profile = DelayProfile::constant(0.7, 2).unwrap();
        let draws = [0u64, 3, 1, 1, 0, 4, 0, 2, 0, 0];
        let mut state = ChannelState::new(2);
        let got: Vec<Option<usize>> = draws
            .iter()
            .enumerate()
            .map(|(i, d)| state.step_with_draw(&profile, i + 1, z(i + 1), *d).source_step())
            .collect();
        let expected = [Some(1), None, Some(2), Some(3), Some(5), None, Some(7), Some(6), Some(9), Some(10)];
        assert_eq!(got, expected);
        assert!(state.buffered() <= 3);
    }

    #[test]
    fn already_delivered_source_is_a_dropout() {
        let profile = DelayProfile::constant(1.0, 2).unwrap();
        let mut state = ChannelState::new(2);
        state.step_with_draw(&profile, 1, z(1), 0);
        state.step_with_draw(&profile, 2, z(2), 0);
        let e = state.step_with_draw(&profile, 3, z(3), 1);
        assert_eq!(e.outcome, Outcome::Dropped);
    }

    #[test]
    fn trace_csv_layout() {
        let events = vec![
            ChannelEvent { step: 1, outcome: Outcome::Delivered { value: z(1), true_delay: 0 } },
            ChannelEvent { step: 2, outcome: Outcome::Dropped },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &events, 1).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,delivered,true_delay,y0\n1,1,0,1\n2,0,-1,\n");
    }

    #[test]
    fn no_repetition_long_run() {
        let profile = DelayProfile::constant(1.3, 4).unwrap();
        let zs: Vec<Vector> = (1..=100_000).map(z).collect();
        let events = simulate_channel(&profile, &zs, &mut seeded(11));
        let mut seen = HashSet::new();
        for e in &events {
            if let Some(src) = e.source_step() {
                assert!(seen.insert(src), "measurement {src} delivered twice");
                assert!(e.true_delay().unwrap() <= profile.effective_max_delay(e.step));
                assert_eq!(e.measurement().unwrap()[0], src as f64);
            }
        }
    }

    proptest! {
        #[test]
        fn probability_closure(lambda in 0.0f64..6.0, n in 0usize..8, k in 1usize..20) {
            let profile = DelayProfile::constant(lambda, n).unwrap();
            let p = delay_probabilities(&profile, k).unwrap();
            let total: f64 = p.gamma.iter().sum::<f64>() + p.dropout;
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!((p.gamma_bar.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.gamma.iter().all(|g| (0.0..=1.0).contains(g)));
            prop_assert!((0.0..=1.0).contains(&p.dropout));
        }

        #[test]
        fn dropout_non_increasing_in_max_delay(lambda in 0.0f64..6.0, n in 0usize..10) {
            let k = 50;
            let a = delay_probabilities(&DelayProfile::constant(lambda, n).unwrap(), k).unwrap();
            let b = delay_probabilities(&DelayProfile::constant(lambda, n + 1).unwrap(), k).unwrap();
            prop_assert!(b.dropout <= a.dropout + 1e-15);
        }

        #[test]
        fn never_delivers_twice(lambda in 0.0f64..4.0, n in 0usize..5, seed in any::<u64>()) {
            let profile = DelayProfile::constant(lambda, n).unwrap();
            let zs: Vec<Vector> = (1..=500).map(z).collect();
            let events = simulate_channel(&profile, &zs, &mut seeded(seed));
            let mut seen = HashSet::new();
            for e in &events {
                if let Some(src) = e.source_step() {
                    prop_assert!(seen.insert(src));
                }
            }
        }
    }
}

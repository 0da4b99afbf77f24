use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::channel::{delay_probabilities, modified_noise_autocorrelation, simulate_channel, ChannelEvent, DelayProfile};
use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};
use crate::{Matrix, Vector};

/// Significance level of the goodness-of-fit test.
pub const SIGNIFICANCE: f64 = 0.01;
/// Standard errors allowed for the dropout rate and the whiteness lags.
pub const Z_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagReport {
    pub lag: usize,
    pub value: f64,
    pub std_error: f64,
    pub target: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub samples: usize,
    pub lambda: Vec<f64>,
    pub max_delay: usize,
    /// Observed counts for delays `0..=N`, then dropouts.
    pub observed: Vec<u64>,
    /// Expected counts in the same layout, `Σ_k γ_k^j` and `Σ_k (1 - Σ_j γ_k^j)`.
    pub expected: Vec<f64>,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub empirical_dropout: f64,
    pub expected_dropout: f64,
    pub dropout_z: f64,
    pub whiteness: Vec<LagReport>,
    pub histogram_pass: bool,
    pub dropout_pass: bool,
    pub whiteness_pass: bool,
}

impl ChannelReport {
    pub fn pass(&self) -> bool {
        self.histogram_pass && self.dropout_pass && self.whiteness_pass
    }
}

/// Pearson chi-square of `observed` against `expected`, skipping empty
/// categories. Returns `(statistic, dof, p-value)`.
pub fn chi_square_test(observed: &[u64], expected: &[f64]) -> Result<(f64, usize, f64)> {
    let mut stat = 0.0;
    let mut cats = 0;
    for (o, e) in observed.iter().zip(expected) {
        if *e > 0.0 {
            stat += (*o as f64 - e).powi(2) / e;
            cats += 1;
        } else if *o > 0 {
            return Ok((f64::INFINITY, cats.max(1), 0.0));
        }
    }
    if cats < 2 {
        return Ok((0.0, 0, 1.0));
    }
    let dof = cats - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((stat, dof, dist.sf(stat)))
}

/// Observed delay/dropout counts of a channel trace.
pub fn outcome_counts(events: &[ChannelEvent], max_delay: usize) -> Vec<u64> {
    let mut c = vec![0u64; max_delay + 2];
    for e in events {
        match e.true_delay() {
            Some(d) => c[d] += 1,
            None => c[max_delay + 1] += 1,
        }
    }
    c
}

/// Expected delay/dropout counts over steps `1..=samples`.
pub fn expected_counts(profile: &DelayProfile, samples: usize) -> Result<Vec<f64>> {
    let n = profile.max_delay();
    let mut e = vec![0.0; n + 2];
    for k in 1..=samples {
        let p = delay_probabilities(profile, k)?;
        for (j, g) in p.gamma.iter().enumerate() {
            e[j] += g;
        }
        e[n + 1] += p.dropout;
    }
    Ok(e)
}

/// Run the channel alone for `samples` steps with scalar measurement noise
/// of variance `noise_var` and test it against the closed-form delay law
/// and the whiteness of the modified noise.
pub fn channel_diagnostics(profile: &DelayProfile, samples: usize, noise_var: f64, seed: u64) -> Result<ChannelReport> {
    if samples < 10_000 {
        return Err(Error::invalid("channel diagnostics need at least 10^4 samples"));
    }
    let normal = Normal::new(0.0, noise_var.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut noise_rng = substream(seed, 0, Purpose::Truth);
    let noise: Vec<Vector> = (0..samples).map(|_| Vector::from_element(1, normal.sample(&mut noise_rng))).collect();
    let mut rng = substream(seed, 0, Purpose::Diagnostics);
    let events = simulate_channel(profile, &noise, &mut rng);

    let n = profile.max_delay();
    let observed = outcome_counts(&events, n);
    let expected = expected_counts(profile, samples)?;
    let (chi_square, dof, p_value) = chi_square_test(&observed, &expected)?;

    let m = samples as f64;
    let empirical_dropout = observed[n + 1] as f64 / m;
    let expected_dropout = expected[n + 1] / m;
    let se = (expected_dropout * (1.0 - expected_dropout) / m).sqrt();
    let dropout_z = if se > 0.0 {
        (empirical_dropout - expected_dropout) / se
    } else if empirical_dropout == expected_dropout {
        0.0
    } else {
        f64::INFINITY
    };

    let r = Matrix::from_element(1, 1, noise_var);
    let lags = modified_noise_autocorrelation(&events, &noise, profile, &r, n.max(1))?;
    let whiteness: Vec<LagReport> = lags
        .iter()
        .map(|l| LagReport {
            lag: l.lag,
            value: l.value[(0, 0)],
            std_error: l.std_error[(0, 0)],
            target: l.target[(0, 0)],
            z: l.max_z(),
        })
        .collect();

    Ok(ChannelReport {
        samples,
        lambda: profile.schedule().to_vec(),
        max_delay: n,
        histogram_pass: p_value > SIGNIFICANCE,
        dropout_pass: dropout_z.abs() <= Z_LIMIT,
        whiteness_pass: whiteness.iter().all(|l| l.z <= Z_LIMIT),
        observed,
        expected,
        chi_square,
        degrees_of_freedom: dof,
        p_value,
        empirical_dropout,
        expected_dropout,
        dropout_z,
        whiteness,
    })
}

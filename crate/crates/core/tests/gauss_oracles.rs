//! Monte Carlo oracles for the Gaussian-approximated filter.

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rdmest::channel::{delay_probabilities, simulate_channel};
use rdmest::gauss::{predict, predict_measurement, update};
use rdmest::models::simulate_truth;
use rdmest::rng::seeded;
use rdmest::{
    ChannelEvent, DelayProbabilities, DelayProfile, DropoutPolicy, GrowthModel, LinearGaussian, Matrix,
    MixtureCovariance, Outcome, SystemModel, Vector, WindowBelief,
};

/// Sample mean and its standard error.
fn mean_se(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[test]
fn growth_predict_mean_matches_monte_carlo() {
    let model = GrowthModel::default();
    let window = WindowBelief::initial(&model, 0);
    let pred = predict(&window, &model).unwrap();

    let q = model.process_cov(1)[(0, 0)];
    let mut rng = seeded(101);
    let samples: Vec<f64> = (0..10_000_000)
        .map(|_| {
            let x0: f64 = rng.sample(StandardNormal);
            let w: f64 = rng.sample(StandardNormal);
            model.transition(1, &Vector::from_element(1, x0))[0] + q.sqrt() * w
        })
        .collect();
    let (mc, se) = mean_se(&samples);
    assert!((pred.mean[0] - mc).abs() <= 3.0 * se, "cubature {} vs Monte Carlo {mc} ± {se}", pred.mean[0]);
}

/// Window over `(x_k, x_{k-1})` for a scalar state, lags far from the
/// measurement origin so the two mixture forms disagree.
fn two_lag_window() -> (LinearGaussian, WindowBelief, DelayProbabilities) {
    let model = LinearGaussian::scalar(0.9, 1.0, 0.3, 0.4, 0.0, 1.0);
    let mean = Vector::from_vec(vec![4.0, 2.5]);
    let cov = Matrix::from_row_slice(2, 2, &[1.2, 0.5, 0.5, 0.8]);
    let window = WindowBelief::from_parts(mean, cov, 5, 1, 1);
    let probs = DelayProbabilities { step: 5, gamma: vec![0.42, 0.28], gamma_bar: vec![0.6, 0.4], dropout: 0.3 };
    (model, window, probs)
}

#[test]
fn mixture_measurement_moments_match_monte_carlo() {
    let (model, window, probs) = two_lag_window();
    let pred = predict_measurement(&window, &model, &probs, MixtureCovariance::Centered).unwrap();
    let uncentered = predict_measurement(&window, &model, &probs, MixtureCovariance::Uncentered).unwrap();

    let chol = window.cov.clone().cholesky().unwrap();
    let l = chol.l();
    let r = model.meas_cov(5)[(0, 0)];
    let mut rng = seeded(102);
    let n = 4_000_000;
    let ys: Vec<f64> = (0..n)
        .map(|_| {
            let e = Vector::from_fn(2, |_, _| rng.sample(StandardNormal));
            let x = &window.mean + &l * e;
            let lag = if rng.random::<f64>() < probs.gamma_bar[0] { 0 } else { 1 };
            let v: f64 = rng.sample(StandardNormal);
            x[lag] + r.sqrt() * v
        })
        .collect();
    let (mean, mean_se) = mean_se(&ys);
    let sq: Vec<f64> = ys.iter().map(|y| (y - mean).powi(2)).collect();
    let (var, var_se) = self::mean_se(&sq);

    assert!((pred.y_hat[0] - mean).abs() <= 3.0 * mean_se, "ŷ {} vs {mean} ± {mean_se}", pred.y_hat[0]);
    assert!((pred.s[(0, 0)] - var).abs() <= 3.0 * var_se, "P^yy {} vs {var} ± {var_se}", pred.s[(0, 0)]);
    // The uncentered form adds Σ γ̄(1-γ̄) ẑ² instead of the spread about ŷ.
    assert!((uncentered.s[(0, 0)] - var).abs() > 3.0 * var_se);
}

#[test]
fn mixture_cross_covariance_matches_monte_carlo() {
    let (model, window, probs) = two_lag_window();
    let pred = predict_measurement(&window, &model, &probs, MixtureCovariance::Centered).unwrap();
    let chol = window.cov.clone().cholesky().unwrap();
    let l = chol.l();
    let r = model.meas_cov(5)[(0, 0)];
    let noise = Normal::new(0.0, r.sqrt()).unwrap();
    let mut rng = seeded(103);
    let n = 2_000_000;
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let e = Vector::from_fn(2, |_, _| rng.sample(StandardNormal));
            let x = &window.mean + &l * e;
            let lag = if rng.random::<f64>() < probs.gamma_bar[0] { 0 } else { 1 };
            (x[0], x[lag] + noise.sample(&mut rng))
        })
        .collect();
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let prods: Vec<f64> = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).collect();
    let (cxy, se) = mean_se(&prods);
    assert!((pred.c[(0, 0)] - cxy).abs() <= 3.0 * se, "P^xy {} vs {cxy} ± {se}", pred.c[(0, 0)]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delivered_update_never_grows_trace(seed in any::<u64>(), lambda in 0.1f64..2.5, n in 0usize..4) {
        let model = GrowthModel::default();
        let profile = DelayProfile::constant(lambda, n).unwrap();
        let steps = 20;
        let truth = simulate_truth(&model, steps, &mut seeded(seed)).unwrap();
        let events = simulate_channel(&profile, &truth.measurements, &mut seeded(seed ^ 1));
        let mut w = WindowBelief::initial(&model, n);
        for e in &events {
            w = predict(&w, &model).unwrap();
            let probs = delay_probabilities(&profile, e.step).unwrap();
            let pred = predict_measurement(&w, &model, &probs, MixtureCovariance::default()).unwrap();
            let next = update(&w, &model, &pred, e, DropoutPolicy::Predicted).unwrap();
            prop_assert!(next.cov.trace() <= w.cov.trace() + 1e-9 * w.cov.trace().abs());
            // Weighted-sum consistency of the predicted measurement.
            let recomputed: Vector = pred.per_lag.iter().zip(&pred.gamma_bar).map(|(l, g)| &l.z_hat * *g).sum();
            prop_assert!((recomputed - &pred.y_hat).amax() <= 1e-12 * (1.0 + pred.y_hat.amax()));
            w = next;
        }
    }

    #[test]
    fn skip_policy_keeps_mean_and_trace(seed in any::<u64>()) {
        let model = GrowthModel::default();
        let profile = DelayProfile::constant(0.8, 2).unwrap();
        let truth = simulate_truth(&model, 6, &mut seeded(seed)).unwrap();
        let events = simulate_channel(&profile, &truth.measurements, &mut seeded(seed ^ 2));
        let mut w = WindowBelief::initial(&model, 2);
        for e in &events {
            w = predict(&w, &model).unwrap();
            let pred = predict_measurement(&w, &model, &delay_probabilities(&profile, e.step).unwrap(), Default::default()).unwrap();
            w = update(&w, &model, &pred, e, DropoutPolicy::Predicted).unwrap();
        }
        let w = predict(&w, &model).unwrap();
        let pred = predict_measurement(&w, &model, &delay_probabilities(&profile, 7).unwrap(), Default::default()).unwrap();
        let drop = ChannelEvent { step: 7, outcome: Outcome::Dropped };
        let skipped = update(&w, &model, &pred, &drop, DropoutPolicy::Skip).unwrap();
        prop_assert_eq!(&skipped.mean, &w.mean);
        prop_assert!(skipped.cov.trace() >= w.cov.trace());
    }
}

use std::ops::Range;

use crate::error::{Error, Result};
use crate::models::ErrorComponent;
use crate::Vector;

/// Per-step RMSE over Monte Carlo runs:
/// `RMSE_k = sqrt(mean_runs ‖sel(x_k) - sel(x̂_k)‖²)`.
///
/// `truth[r][i]` and `estimates[r][i]` are the state and estimate of run
/// `r` at step `i + 1`.
pub fn rmse(truth: &[Vec<Vector>], estimates: &[Vec<Vector>], component: &ErrorComponent) -> Result<Vec<f64>> {
    if truth.is_empty() || truth.len() != estimates.len() {
        return Err(Error::dims(format!("{} truth runs, {} estimate runs", truth.len(), estimates.len())));
    }
    let steps = truth[0].len();
    if truth.iter().chain(estimates).any(|r| r.len() != steps) {
        return Err(Error::dims("runs have different lengths"));
    }
    let mut sum = vec![0.0; steps];
    for (t, e) in truth.iter().zip(estimates) {
        for (k, (x, xh)) in t.iter().zip(e).enumerate() {
            if component.indices.iter().any(|&i| i >= x.len() || i >= xh.len()) {
                return Err(Error::dims(format!("component {} is out of range", component.name)));
            }
            sum[k] += component.squared_error(x, xh);
        }
    }
    let m = truth.len() as f64;
    Ok(sum.into_iter().map(|s| (s / m).sqrt()).collect())
}

/// Mean of `values[range]`.
pub fn time_average(values: &[f64], range: Range<usize>) -> f64 {
    let slice = &values[range];
    slice.iter().sum::<f64>() / slice.len() as f64
}

/// Mean over the steps that have a value.
pub fn time_average_present(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

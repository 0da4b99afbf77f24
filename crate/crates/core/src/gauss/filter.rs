use nalgebra::Cholesky;

use super::{CubatureRule, DropoutPolicy, MixtureCovariance, Moments, WindowBelief};
use crate::channel::{delay_probabilities, ChannelEvent, DelayProbabilities, DelayProfile};
use crate::error::{Error, Result};
use crate::gauss::GaussianBelief;
use crate::linalg::{cholesky_jittered, relative_asymmetry, right_solve_spd, symmetrize};
use crate::models::SystemModel;
use crate::{Matrix, Vector};

/// Tolerance on `‖P − Pᵀ‖ / ‖P‖` before re-symmetrization.
const ASYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GafConfig {
    pub dropout_policy: DropoutPolicy,
    pub mixture_covariance: MixtureCovariance,
}

/// Moments of the measurement generated `s` steps ago.
#[derive(Debug, Clone)]
pub struct LagPrediction {
    pub lag: usize,
    /// `ẑ_{k-s|k-1}`.
    pub z_hat: Vector,
    /// `P^{zz}_{k-s|k-1}`, including `R_{k-s}`.
    pub pzz: Matrix,
    /// `P^{xz}_{k,k-s|k-1}`: current state vs lagged measurement.
    pub pxz: Matrix,
    /// Cross-covariance of the whole window with the lagged measurement.
    pub window_cross: Matrix,
}

#[derive(Debug, Clone)]
pub struct MeasurementPrediction {
    pub step: usize,
    pub gamma_bar: Vec<f64>,
    /// `ŷ_{k|k-1} = Σ γ̄_s ẑ_s`.
    pub y_hat: Vector,
    /// `P^{yy}_{k|k-1}`.
    pub s: Matrix,
    /// `P^{xy}_{k|k-1} = Σ γ̄_s P^{xz}_s`.
    pub c: Matrix,
    /// `Σ γ̄_s` of the window cross-covariances; its top block is `c`.
    pub window_cross: Matrix,
    pub per_lag: Vec<LagPrediction>,
}

/// Numerical health counters for one filtering pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GafDiagnostics {
    /// Updates whose covariance was asymmetric beyond tolerance before
    /// re-symmetrization.
    pub asymmetry_violations: usize,
    /// Window covariances that failed the jittered Cholesky check.
    pub psd_violations: usize,
    /// Largest jitter needed by any cubature factorization.
    pub max_jitter: f64,
}

impl GafDiagnostics {
    fn absorb(&mut self, m: &Moments) {
        self.max_jitter = self.max_jitter.max(m.jitter);
    }

    fn check(&mut self, cov: &Matrix) {
        if relative_asymmetry(cov) > ASYMMETRY_TOL {
            self.asymmetry_violations += 1;
        }
    }

    fn check_psd(&mut self, cov: &Matrix) {
        if cholesky_jittered(cov).is_none() {
            self.psd_violations += 1;
        }
    }

    pub fn violations(&self) -> usize {
        self.asymmetry_violations + self.psd_violations
    }
}

/// Cubature transform of `g` on block `s`, plus the cross-covariance of every
/// window block with `g(x_s)`.
///
/// Under a joint Gaussian, `Cov(x_b, g(x_s)) = P_bs P_ss⁻¹ Cov(x_s, g(x_s))`.
fn block_transform<G, D>(window: &WindowBelief, s: usize, g: G, diff: D) -> Result<(Moments, Matrix)>
where
    G: Fn(&Vector) -> Vector,
    D: Fn(&Vector, &Vector) -> Vector,
{
    let n = window.state_dim();
    let m_s = window.block_mean(s);
    let p_ss = window.block_cov(s, s);
    let (sqrt, jitter) = cholesky_jittered(&p_ss)
        .ok_or_else(|| Error::numerical(format!("block {s} covariance is not positive semi-definite")))?;
    let mut moments = CubatureRule::new(n).transform_factored(&m_s, &sqrt, g, diff);
    moments.jitter = jitter;

    let blocks = window.blocks();
    let mz = moments.mean.len();
    let mut cross = Matrix::zeros(blocks * n, mz);
    let regression = if blocks > 1 && moments.cross.iter().any(|v| *v != 0.0) {
        let mut p = p_ss.clone();
        for i in 0..n {
            p[(i, i)] += jitter;
        }
        let chol = Cholesky::new(p)
            .ok_or_else(|| Error::numerical(format!("block {s} covariance is singular")))?;
        Some(chol.solve(&moments.cross))
    } else {
        None
    };
    for b in 0..blocks {
        let rows = if b == s {
            moments.cross.clone()
        } else if let Some(r) = &regression {
            window.block_cov(b, s) * r
        } else {
            Matrix::zeros(n, mz)
        };
        cross.view_mut((b * n, 0), (n, mz)).copy_from(&rows);
    }
    Ok((moments, cross))
}

/// Time update from step `k-1` to `k`: `x_k = f(x_{k-1}) + w`, the older
/// blocks shift down one lag and anything beyond `min(N, k-1)` is dropped.
pub fn predict<M: SystemModel + ?Sized>(window: &WindowBelief, model: &M) -> Result<WindowBelief> {
    predict_with(window, model, &mut GafDiagnostics::default())
}

fn predict_with<M: SystemModel + ?Sized>(
    window: &WindowBelief,
    model: &M,
    diag: &mut GafDiagnostics,
) -> Result<WindowBelief> {
    let k = window.step + 1;
    let n = window.state_dim();
    let (moments, cross) =
        block_transform(window, 0, |x| model.transition(k, x), |a, b| a - b).map_err(|e| e.at_step(k))?;
    diag.absorb(&moments);

    let keep = window.max_delay().min(k - 1).min(window.blocks());
    let dim = (keep + 1) * n;
    let mut mean = Vector::zeros(dim);
    mean.rows_mut(0, n).copy_from(&moments.mean);
    mean.rows_mut(n, keep * n).copy_from(&window.mean.rows(0, keep * n));

    let mut cov = Matrix::zeros(dim, dim);
    cov.view_mut((0, 0), (n, n)).copy_from(&(moments.cov + model.process_cov(k)));
    let c = cross.rows(0, keep * n);
    cov.view_mut((n, 0), (keep * n, n)).copy_from(&c);
    cov.view_mut((0, n), (n, keep * n)).copy_from(&c.transpose());
    cov.view_mut((n, n), (keep * n, keep * n)).copy_from(&window.cov.view((0, 0), (keep * n, keep * n)));
    symmetrize(&mut cov);

    Ok(WindowBelief::from_parts(mean, cov, k, n, window.max_delay()))
}

/// Predicted received measurement at the window's step.
pub fn predict_measurement<M: SystemModel + ?Sized>(
    window: &WindowBelief,
    model: &M,
    probs: &DelayProbabilities,
    form: MixtureCovariance,
) -> Result<MeasurementPrediction> {
    predict_measurement_with(window, model, probs, form, &mut GafDiagnostics::default())
}

fn predict_measurement_with<M: SystemModel + ?Sized>(
    window: &WindowBelief,
    model: &M,
    probs: &DelayProbabilities,
    form: MixtureCovariance,
    diag: &mut GafDiagnostics,
) -> Result<MeasurementPrediction> {
    let k = window.step;
    let n = window.state_dim();
    let blocks = window.blocks();
    if probs.gamma_bar.len() != blocks || probs.step != k {
        return Err(Error::dims(format!(
            "window at step {k} has {blocks} lags, delay probabilities at step {} have {}",
            probs.step,
            probs.gamma_bar.len()
        )));
    }
    let nz = model.meas_dim();
    let residual = |a: &Vector, b: &Vector| model.measurement_residual(a, b);

    let mut per_lag = Vec::with_capacity(blocks);
    for s in 0..blocks {
        let (moments, cross) =
            block_transform(window, s, |x| model.measurement(k - s, x), residual).map_err(|e| e.at_step(k))?;
        diag.absorb(&moments);
        per_lag.push(LagPrediction {
            lag: s,
            pzz: moments.cov + model.meas_cov(k - s),
            pxz: cross.rows(0, n).into_owned(),
            z_hat: moments.mean,
            window_cross: cross,
        });
    }

    let gb = &probs.gamma_bar;
    let mut y_hat = Vector::zeros(nz);
    let mut s_mat = Matrix::zeros(nz, nz);
    let mut window_cross = Matrix::zeros(blocks * n, nz);
    for (lag, g) in per_lag.iter().zip(gb) {
        y_hat += &lag.z_hat * *g;
        s_mat += &lag.pzz * *g;
        window_cross += &lag.window_cross * *g;
    }
    for (lag, g) in per_lag.iter().zip(gb) {
        match form {
            MixtureCovariance::Uncentered => s_mat.ger(g * (1.0 - g), &lag.z_hat, &lag.z_hat, 1.0),
            MixtureCovariance::Centered => {
                let d = residual(&lag.z_hat, &y_hat);
                s_mat.ger(*g, &d, &d, 1.0)
            }
        }
    }
    symmetrize(&mut s_mat);
    let c = window_cross.rows(0, n).into_owned();
    Ok(MeasurementPrediction { step: k, gamma_bar: gb.clone(), y_hat, s: s_mat, c, window_cross, per_lag })
}

/// Moment-matched measurement update of the whole window.
///
/// `x̂ ← x̂ + K (y - ŷ)`, `P ← P - K P^{yy} Kᵀ` with `K = P^{wy} (P^{yy})⁻¹`;
/// the top block is the posterior of `x_k`.
pub fn update<M: SystemModel + ?Sized>(
    window: &WindowBelief,
    model: &M,
    pred: &MeasurementPrediction,
    event: &ChannelEvent,
    policy: DropoutPolicy,
) -> Result<WindowBelief> {
    update_with(window, model, pred, event, policy, &mut GafDiagnostics::default())
}

fn update_with<M: SystemModel + ?Sized>(
    window: &WindowBelief,
    model: &M,
    pred: &MeasurementPrediction,
    event: &ChannelEvent,
    policy: DropoutPolicy,
    diag: &mut GafDiagnostics,
) -> Result<WindowBelief> {
    let k = window.step;
    if pred.step != k || event.step != k {
        return Err(Error::invalid(format!(
            "update at step {k} given prediction for {} and event for {}",
            pred.step, event.step
        )));
    }
    let innovation = match (event.measurement(), policy) {
        (Some(y), _) => model.measurement_residual(y, &pred.y_hat),
        (None, DropoutPolicy::Predicted) => Vector::zeros(pred.y_hat.len()),
        (None, DropoutPolicy::Skip) => return Ok(window.clone()),
    };
    let gain = right_solve_spd(&pred.window_cross, &pred.s).ok_or_else(|| Error::Divergence {
        step: k,
        reason: "innovation covariance is not positive definite".into(),
    })?;
    let mean = &window.mean + &gain * innovation;
    let mut cov = &window.cov - &gain * &pred.s * gain.transpose();
    diag.check(&cov);
    symmetrize(&mut cov);
    diag.check_psd(&cov);
    Ok(WindowBelief::from_parts(mean, cov, k, window.state_dim(), window.max_delay()))
}

/// Output of a full GAF pass.
#[derive(Debug, Clone)]
pub struct GafTrace {
    /// Posterior marginal of `x_k` for `k = 1..=steps`.
    pub beliefs: Vec<GaussianBelief>,
    pub diagnostics: GafDiagnostics,
}

/// Filter a whole channel trajectory.
pub fn gaf_run<M: SystemModel + ?Sized>(
    model: &M,
    profile: &DelayProfile,
    events: &[ChannelEvent],
    steps: usize,
    config: GafConfig,
) -> Result<GafTrace> {
    if events.len() != steps {
        return Err(Error::dims(format!("{} events for {steps} steps", events.len())));
    }
    let mut diag = GafDiagnostics::default();
    let mut window = WindowBelief::initial(model, profile.max_delay());
    let mut beliefs = Vec::with_capacity(steps);
    for (i, event) in events.iter().enumerate() {
        let k = i + 1;
        let probs = delay_probabilities(profile, k)?;
        window = predict_with(&window, model, &mut diag)?;
        let pred = predict_measurement_with(&window, model, &probs, config.mixture_covariance, &mut diag)?;
        window = update_with(&window, model, &pred, event, config.dropout_policy, &mut diag)?;
        if !window.mean.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step: k, reason: "non-finite state estimate".into() });
        }
        beliefs.push(window.current());
    }
    Ok(GafTrace { beliefs, diagnostics: diag })
}

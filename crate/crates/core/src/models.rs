//! Nonlinear state-space models `x_k = f_{k-1}(x_{k-1}) + w_{k-1}`,
//! `z_k = h_k(x_k) + v_k` with additive Gaussian noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, wrap_angle};
use crate::{Matrix, Vector};

/// A named subset of state components scored together by the RMSE metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorComponent {
    pub name: String,
    pub indices: Vec<usize>,
}

impl ErrorComponent {
    pub fn new(name: &str, indices: &[usize]) -> Self {
        ErrorComponent { name: name.to_string(), indices: indices.to_vec() }
    }

    /// Squared Euclidean error over the selected components.
    pub fn squared_error(&self, truth: &Vector, estimate: &Vector) -> f64 {
        self.indices.iter().map(|&i| (truth[i] - estimate[i]).powi(2)).sum()
    }
}

/// Model interface used by every filter. Steps are 1-indexed; `x_0` is the
/// initial state.
pub trait SystemModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;

    /// Noise-free transition `f_{k-1}` producing `x_k` from `x_{k-1}`.
    fn transition(&self, k: usize, x: &Vector) -> Vector;

    /// Noise-free measurement `h_k(x_k)`.
    fn measurement(&self, k: usize, x: &Vector) -> Vector;

    /// `Q_{k-1}`, the covariance of the noise entering `x_k`.
    fn process_cov(&self, k: usize) -> Matrix;

    /// `R_k`.
    fn meas_cov(&self, k: usize) -> Matrix;

    fn initial_mean(&self) -> Vector;
    fn initial_cov(&self) -> Matrix;

    /// `y - ŷ`, with any angular components wrapped.
    fn measurement_residual(&self, y: &Vector, y_hat: &Vector) -> Vector {
        y - y_hat
    }

    /// Components scored by the RMSE metric.
    fn error_components(&self) -> Vec<ErrorComponent> {
        vec![ErrorComponent::new("state", &(0..self.state_dim()).collect::<Vec<_>>())]
    }
}

/// Simulated ground truth for one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `x_0..=x_K`.
    pub states: Vec<Vector>,
    /// `z_1..=z_K` at indices `0..K`.
    pub measurements: Vec<Vector>,
    /// The injected `v_1..=v_K`.
    pub meas_noise: Vec<Vector>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.measurements.len()
    }

    /// `x_k` for `k` in `0..=K`.
    pub fn state(&self, k: usize) -> &Vector {
        &self.states[k]
    }
}

pub(crate) fn sample_gaussian<R: Rng + ?Sized>(sqrt_cov: &Matrix, rng: &mut R) -> Vector {
    let n = sqrt_cov.ncols();
    let e = Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    sqrt_cov * e
}

/// Draw `x_0` from the model's initial distribution and iterate the model.
pub fn simulate_truth<M, R>(model: &M, steps: usize, rng: &mut R) -> Result<Trajectory>
where
    M: SystemModel + ?Sized,
    R: Rng + ?Sized,
{
    let x0 = model.initial_mean() + sample_gaussian(&psd_sqrt(&model.initial_cov()), rng);
    simulate_truth_from(model, x0, steps, rng)
}

/// Iterate the model from a given `x_0`.
pub fn simulate_truth_from<M, R>(model: &M, x0: Vector, steps: usize, rng: &mut R) -> Result<Trajectory>
where
    M: SystemModel + ?Sized,
    R: Rng + ?Sized,
{
    if steps == 0 {
        return Err(Error::invalid("at least one step is required"));
    }
    if x0.len() != model.state_dim() {
        return Err(Error::dims(format!("x0 has {} entries, model state has {}", x0.len(), model.state_dim())));
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut measurements = Vec::with_capacity(steps);
    let mut meas_noise = Vec::with_capacity(steps);
    states.push(x0);
    for k in 1..=steps {
        let w = sample_gaussian(&psd_sqrt(&model.process_cov(k)), rng);
        let x = model.transition(k, &states[k - 1]) + w;
        let v = sample_gaussian(&psd_sqrt(&model.meas_cov(k)), rng);
        measurements.push(model.measurement(k, &x) + &v);
        meas_noise.push(v);
        states.push(x);
    }
    Ok(Trajectory { states, measurements, meas_noise })
}

/// Parameters of the univariate non-stationary growth model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthParams {
    pub process_var: f64,
    pub meas_var: f64,
    pub initial_mean: f64,
    pub initial_var: f64,
}

impl Default for GrowthParams {
    fn default() -> Self {
        GrowthParams { process_var: 10.0, meas_var: 1.0, initial_mean: 0.0, initial_var: 1.0 }
    }
}

/// `x_k = 0.5 x + 25 x / (1 + x²) + 8 cos(1.2 k) + w`, `z_k = x_k² / 20 + v`.
#[derive(Debug, Clone, Default)]
pub struct GrowthModel {
    params: GrowthParams,
}

impl GrowthModel {
    pub fn new(params: GrowthParams) -> Result<Self> {
        if !(params.process_var > 0.0 && params.meas_var > 0.0 && params.initial_var >= 0.0) {
            return Err(Error::invalid("growth model variances must be positive"));
        }
        Ok(GrowthModel { params })
    }

    pub fn params(&self) -> &GrowthParams {
        &self.params
    }
}

impl SystemModel for GrowthModel {
    fn state_dim(&self) -> usize {
        1
    }

    fn meas_dim(&self) -> usize {
        1
    }

    fn transition(&self, k: usize, x: &Vector) -> Vector {
        let x = x[0];
        Vector::from_element(1, 0.5 * x + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * k as f64).cos())
    }

    fn measurement(&self, _k: usize, x: &Vector) -> Vector {
        Vector::from_element(1, x[0] * x[0] / 20.0)
    }

    fn process_cov(&self, _k: usize) -> Matrix {
        Matrix::from_element(1, 1, self.params.process_var)
    }

    fn meas_cov(&self, _k: usize) -> Matrix {
        Matrix::from_element(1, 1, self.params.meas_var)
    }

    fn initial_mean(&self) -> Vector {
        Vector::from_element(1, self.params.initial_mean)
    }

    fn initial_cov(&self) -> Matrix {
        Matrix::from_element(1, 1, self.params.initial_var)
    }
}

/// Coordinated-turn tracking parameters. The turn rate is given in deg/s;
/// the state carries it in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CtParams {
    /// Seconds between steps.
    pub sample_time: f64,
    /// Initial-mean turn rate, deg/s.
    pub turn_rate_deg: f64,
    /// Position/velocity noise intensity, m²/s³.
    pub q1: f64,
    /// Turn-rate noise intensity, s⁻³.
    pub q2: f64,
    /// Range noise std, m.
    pub sigma_r: f64,
    /// Bearing noise std, rad.
    pub sigma_theta: f64,
    /// `[ζ, ζ̇, η, η̇]` of the initial mean (m, m/s).
    pub initial_kinematics: [f64; 4],
    /// Diagonal of the initial covariance (m², m²/s², m², m²/s², rad²/s²).
    pub initial_cov_diag: [f64; 5],
}

impl Default for CtParams {
    fn default() -> Self {
        CtParams {
            sample_time: 0.125,
            turn_rate_deg: -3.0,
            q1: 0.1,
            q2: 1.75e-4,
            sigma_r: 10.0,
            sigma_theta: 10f64.sqrt() * 1e-3,
            initial_kinematics: [1000.0, 300.0, 1000.0, 0.0],
            initial_cov_diag: [100.0, 10.0, 100.0, 10.0, 100.0e-6],
        }
    }
}

/// 2-D coordinated turn with unknown turn rate observed by a range/bearing
/// radar at the origin. State `[ζ, ζ̇, η, η̇, Ω]`; `η` is the Y position
/// (`pos_y`), unrelated to process noise.
#[derive(Debug, Clone)]
pub struct CoordinatedTurn {
    params: CtParams,
    process_cov: Matrix,
    meas_cov: Matrix,
}

/// `sin(ΩT)/Ω` and `(1 - cos(ΩT))/Ω`, with their series near `Ω = 0`.
fn turn_coefficients(omega: f64, t: f64) -> (f64, f64) {
    let wt = omega * t;
    if wt.abs() < 1e-5 {
        let sin_term = t * (1.0 - wt * wt / 6.0);
        let cos_term = omega * t * t / 2.0 * (1.0 - wt * wt / 12.0);
        (sin_term, cos_term)
    } else {
        (wt.sin() / omega, (1.0 - wt.cos()) / omega)
    }
}

/// Block transition matrix for turn rate `omega` (rad/s).
pub fn ct_transition_matrix(omega: f64, t: f64) -> Matrix {
    let (s, c) = turn_coefficients(omega, t);
    let (sw, cw) = ((omega * t).sin(), (omega * t).cos());
    #[rustfmt::skip]
    let f = Matrix::from_row_slice(5, 5, &[
        1.0, s,   0.0, -c,  0.0,
        0.0, cw,  0.0, -sw, 0.0,
        0.0, c,   1.0, s,   0.0,
        0.0, sw,  0.0, cw,  0.0,
        0.0, 0.0, 0.0, 0.0, 1.0,
    ]);
    f
}

impl CoordinatedTurn {
    pub fn new(params: CtParams) -> Result<Self> {
        if !(params.sample_time > 0.0 && params.sigma_r > 0.0 && params.sigma_theta > 0.0) {
            return Err(Error::invalid("sample time and measurement noise must be positive"));
        }
        if params.q1 < 0.0 || params.q2 < 0.0 || params.initial_cov_diag.iter().any(|v| *v < 0.0) {
            return Err(Error::invalid("noise intensities and initial variances must be >= 0"));
        }
        let t = params.sample_time;
        let m = [[t.powi(3) / 3.0, t * t / 2.0], [t * t / 2.0, t]];
        let mut q = Matrix::zeros(5, 5);
        for block in [0usize, 2] {
            for i in 0..2 {
                for j in 0..2 {
                    q[(block + i, block + j)] = params.q1 * m[i][j];
                }
            }
        }
        q[(4, 4)] = params.q2 * t;
        let meas_cov = Matrix::from_diagonal(&Vector::from_vec(vec![
            params.sigma_r.powi(2),
            params.sigma_theta.powi(2),
        ]));
        Ok(CoordinatedTurn { params, process_cov: q, meas_cov })
    }

    pub fn params(&self) -> &CtParams {
        &self.params
    }
}

impl Default for CoordinatedTurn {
    fn default() -> Self {
        Self::new(CtParams::default()).expect("default parameters are valid")
    }
}

impl SystemModel for CoordinatedTurn {
    fn state_dim(&self) -> usize {
        5
    }

    fn meas_dim(&self) -> usize {
        2
    }

    fn transition(&self, _k: usize, x: &Vector) -> Vector {
        ct_transition_matrix(x[4], self.params.sample_time) * x
    }

    fn measurement(&self, _k: usize, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[0].hypot(x[2]), x[2].atan2(x[0])])
    }

    fn process_cov(&self, _k: usize) -> Matrix {
        self.process_cov.clone()
    }

    fn meas_cov(&self, _k: usize) -> Matrix {
        self.meas_cov.clone()
    }

    fn initial_mean(&self) -> Vector {
        let [a, b, c, d] = self.params.initial_kinematics;
        Vector::from_vec(vec![a, b, c, d, self.params.turn_rate_deg * PI / 180.0])
    }

    fn initial_cov(&self) -> Matrix {
        Matrix::from_diagonal(&Vector::from_row_slice(&self.params.initial_cov_diag))
    }

    fn measurement_residual(&self, y: &Vector, y_hat: &Vector) -> Vector {
        Vector::from_vec(vec![y[0] - y_hat[0], wrap_angle(y[1] - y_hat[1])])
    }

    fn error_components(&self) -> Vec<ErrorComponent> {
        vec![
            ErrorComponent::new("position", &[0, 2]),
            ErrorComponent::new("velocity", &[1, 3]),
            ErrorComponent::new("turn_rate", &[4]),
        ]
    }
}

/// Time-invariant linear-Gaussian model, mainly for closed-form checks.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    pub transition: Matrix,
    pub observation: Matrix,
    pub process_cov: Matrix,
    pub meas_cov: Matrix,
    pub initial_mean: Vector,
    pub initial_cov: Matrix,
}

impl LinearGaussian {
    pub fn new(
        transition: Matrix,
        observation: Matrix,
        process_cov: Matrix,
        meas_cov: Matrix,
        initial_mean: Vector,
        initial_cov: Matrix,
    ) -> Result<Self> {
        let n = transition.nrows();
        let m = observation.nrows();
        let ok = transition.is_square()
            && observation.ncols() == n
            && process_cov.shape() == (n, n)
            && meas_cov.shape() == (m, m)
            && initial_mean.len() == n
            && initial_cov.shape() == (n, n);
        if !ok {
            return Err(Error::dims("inconsistent linear model dimensions"));
        }
        Ok(LinearGaussian { transition, observation, process_cov, meas_cov, initial_mean, initial_cov })
    }

    /// Scalar model `x_k = a x + w`, `z = c x + v`.
    pub fn scalar(a: f64, c: f64, q: f64, r: f64, m0: f64, p0: f64) -> Self {
        let s = |v| Matrix::from_element(1, 1, v);
        LinearGaussian::new(s(a), s(c), s(q), s(r), Vector::from_element(1, m0), s(p0))
            .expect("scalar dimensions are consistent")
    }
}

impl SystemModel for LinearGaussian {
    fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    fn meas_dim(&self) -> usize {
        self.observation.nrows()
    }

    fn transition(&self, _k: usize, x: &Vector) -> Vector {
        &self.transition * x
    }

    fn measurement(&self, _k: usize, x: &Vector) -> Vector {
        &self.observation * x
    }

    fn process_cov(&self, _k: usize) -> Matrix {
        self.process_cov.clone()
    }

    fn meas_cov(&self, _k: usize) -> Matrix {
        self.meas_cov.clone()
    }

    fn initial_mean(&self) -> Vector {
        self.initial_mean.clone()
    }

    fn initial_cov(&self) -> Matrix {
        self.initial_cov.clone()
    }
}

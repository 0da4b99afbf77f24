//! Small dense linear-algebra helpers shared by the filters.

use std::f64::consts::PI;

use nalgebra::{Cholesky, Dyn, SymmetricEigen};

use crate::{Matrix, Vector};

/// Smallest relative jitter tried when a covariance fails to factorize.
pub const JITTER_START: f64 = 1e-12;
/// Largest relative jitter before a factorization is declared divergent.
pub const JITTER_MAX: f64 = 1e-6;

/// Replace `m` with `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `max|m - mᵀ| / max|m|`, zero for the zero matrix.
pub fn relative_asymmetry(m: &Matrix) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Lower Cholesky factor with the escalating-jitter policy.
///
/// On failure, `εI` is added with `ε` doubling from `1e-12·tr(P)/n` up to
/// `1e-6·tr(P)/n`. Returns the factor and the jitter that was needed. The
/// all-zero matrix factors to the zero matrix.
pub fn cholesky_jittered(p: &Matrix) -> Option<(Matrix, f64)> {
    let n = p.nrows();
    if let Some(c) = Cholesky::new(p.clone()) {
        return Some((c.l(), 0.0));
    }
    if p.iter().all(|v| *v == 0.0) {
        return Some((Matrix::zeros(n, n), 0.0));
    }
    let scale = p.trace() / n as f64;
    if !(scale.is_finite() && scale > 0.0) {
        return None;
    }
    let mut eps = JITTER_START * scale;
    while eps <= JITTER_MAX * scale * (1.0 + 1e-12) {
        let mut q = p.clone();
        for i in 0..n {
            q[(i, i)] += eps;
        }
        if let Some(c) = Cholesky::new(q) {
            return Some((c.l(), eps));
        }
        eps *= 2.0;
    }
    None
}

/// Any `S` with `S Sᵀ = P` for a symmetric PSD `P`, used for sampling.
/// Falls back to a clamped eigen-decomposition for singular matrices.
pub fn psd_sqrt(p: &Matrix) -> Matrix {
    if let Some(c) = Cholesky::new(p.clone()) {
        return c.l();
    }
    let eig = SymmetricEigen::new(p.clone());
    let mut s = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let r = lambda.max(0.0).sqrt();
        s.column_mut(j).scale_mut(r);
    }
    s
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Solve `X S = C` for `X` (i.e. `X = C S⁻¹`) with `S` symmetric positive
/// definite.
pub fn right_solve_spd(c: &Matrix, s: &Matrix) -> Option<Matrix> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(s.clone())?;
    Some(chol.solve(&c.transpose()).transpose())
}

/// Precomputed multivariate normal log-density for a fixed covariance.
#[derive(Debug, Clone)]
pub struct GaussianLogDensity {
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl GaussianLogDensity {
    pub fn new(cov: &Matrix) -> Option<Self> {
        let n = cov.nrows();
        let chol = Cholesky::new(cov.clone())?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (n as f64 * (2.0 * PI).ln() + log_det);
        Some(GaussianLogDensity { chol, log_norm })
    }

    /// `log N(r; 0, cov)`.
    pub fn log_pdf(&self, residual: &Vector) -> f64 {
        let mut w = residual.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut w);
        self.log_norm - 0.5 * w.norm_squared()
    }
}

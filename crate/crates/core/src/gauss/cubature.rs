use crate::error::{Error, Result};
use crate::linalg::cholesky_jittered;
use crate::{Matrix, Vector};

/// Third-degree spherical-radial cubature: `2n` points `±√n·e_i` with equal
/// weights `1/(2n)`, exact for polynomials up to degree three under a
/// Gaussian.
#[derive(Debug, Clone)]
pub struct CubatureRule {
    dim: usize,
    points: Vec<Vector>,
    weight: f64,
}

/// Moments of `g(x)` for Gaussian `x`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean: Vector,
    pub cov: Matrix,
    /// `Cov(x, g(x))`, `n × m`.
    pub cross: Matrix,
    /// Diagonal jitter needed to factor the input covariance.
    pub jitter: f64,
}

impl CubatureRule {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "cubature needs a positive dimension");
        let scale = (dim as f64).sqrt();
        let mut points = Vec::with_capacity(2 * dim);
        for sign in [1.0, -1.0] {
            for i in 0..dim {
                let mut p = Vector::zeros(dim);
                p[i] = sign * scale;
                points.push(p);
            }
        }
        CubatureRule { dim, points, weight: 1.0 / (2 * dim) as f64 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Unit points for a standard normal.
    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::repeat_n(self.weight, self.points.len())
    }

    /// Moments of `g` with ordinary vector differences.
    pub fn transform<G>(&self, mean: &Vector, cov: &Matrix, g: G) -> Result<Moments>
    where
        G: Fn(&Vector) -> Vector,
    {
        self.transform_with(mean, cov, g, |a, b| a - b)
    }

    /// Moments of `g`, measuring spread with `diff(g_i, ḡ)` (for angle
    /// wrapping).
    pub fn transform_with<G, D>(&self, mean: &Vector, cov: &Matrix, g: G, diff: D) -> Result<Moments>
    where
        G: Fn(&Vector) -> Vector,
        D: Fn(&Vector, &Vector) -> Vector,
    {
        let (sqrt, jitter) = cholesky_jittered(cov)
            .ok_or_else(|| Error::numerical("covariance is not positive semi-definite"))?;
        let mut m = self.transform_factored(mean, &sqrt, g, diff);
        m.jitter = jitter;
        Ok(m)
    }

    /// Moments of `g` given a square-root factor `S` with `S Sᵀ = P`.
    pub fn transform_factored<G, D>(&self, mean: &Vector, sqrt: &Matrix, g: G, diff: D) -> Moments
    where
        G: Fn(&Vector) -> Vector,
        D: Fn(&Vector, &Vector) -> Vector,
    {
        assert_eq!(mean.len(), self.dim, "cubature rule dimension mismatch");
        let offsets: Vec<Vector> = self.points.iter().map(|p| sqrt * p).collect();
        let values: Vec<Vector> = offsets.iter().map(|o| g(&(mean + o))).collect();
        let m = values[0].len();
        let mut g_mean = Vector::zeros(m);
        for v in &values {
            g_mean.axpy(self.weight, v, 1.0);
        }
        let mut cov = Matrix::zeros(m, m);
        let mut cross = Matrix::zeros(self.dim, m);
        for (o, v) in offsets.iter().zip(&values) {
            let d = diff(v, &g_mean);
            cov.ger(self.weight, &d, &d, 1.0);
            cross.ger(self.weight, o, &d, 1.0);
        }
        Moments { mean: g_mean, cov, cross, jitter: 0.0 }
    }
}

/// One-shot cubature transform of `g` under `N(mean, cov)`.
pub fn cubature_transform<G>(mean: &Vector, cov: &Matrix, g: G) -> Result<Moments>
where
    G: Fn(&Vector) -> Vector,
{
    CubatureRule::new(mean.len()).transform(mean, cov, g)
}

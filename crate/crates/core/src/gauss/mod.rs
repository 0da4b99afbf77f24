//! Gaussian-approximated filter (GAF) for randomly delayed measurements.
//!
//! The received measurement at step `k` is one of `z_k, …, z_{k-N̄}`, so
//! the filter keeps a joint Gaussian over the stacked window
//! `[x_k; x_{k-1}; …; x_{k-N̄}]`. Every per-lag moment (predicted lagged
//! measurement, its covariance, its cross-covariance with the current
//! state) is then a cubature transform of one block of that window, and the
//! moment-matched update is applied to the whole window at once.

mod cubature;
mod filter;

use serde::{Deserialize, Serialize};

pub use cubature::{cubature_transform, CubatureRule, Moments};
pub use filter::{
    gaf_run, predict, predict_measurement, update, GafConfig, GafDiagnostics, GafTrace, LagPrediction,
    MeasurementPrediction,
};

use crate::models::SystemModel;
use crate::{Matrix, Vector};

/// Mean and covariance of a Gaussian state estimate at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vector,
    pub cov: Matrix,
    pub step: usize,
}

/// Joint Gaussian over `[x_k; x_{k-1}; …; x_{k-L+1}]` with `L ≤ N + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBelief {
    pub mean: Vector,
    pub cov: Matrix,
    pub step: usize,
    state_dim: usize,
    max_delay: usize,
}

impl WindowBelief {
    /// Prior window at step 0: a single block holding `x_0`.
    pub fn initial<M: SystemModel + ?Sized>(model: &M, max_delay: usize) -> Self {
        WindowBelief {
            mean: model.initial_mean(),
            cov: model.initial_cov(),
            step: 0,
            state_dim: model.state_dim(),
            max_delay,
        }
    }

    pub fn from_parts(mean: Vector, cov: Matrix, step: usize, state_dim: usize, max_delay: usize) -> Self {
        assert_eq!(mean.len() % state_dim, 0, "window mean must hold whole blocks");
        assert_eq!(cov.shape(), (mean.len(), mean.len()));
        WindowBelief { mean, cov, step, state_dim, max_delay }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    /// Number of stacked states.
    pub fn blocks(&self) -> usize {
        self.mean.len() / self.state_dim
    }

    pub fn block_mean(&self, s: usize) -> Vector {
        self.mean.rows(s * self.state_dim, self.state_dim).into_owned()
    }

    pub fn block_cov(&self, s: usize, t: usize) -> Matrix {
        let n = self.state_dim;
        self.cov.view((s * n, t * n), (n, n)).into_owned()
    }

    /// Marginal of the current state (top block).
    pub fn current(&self) -> GaussianBelief {
        GaussianBelief { mean: self.block_mean(0), cov: self.block_cov(0, 0), step: self.step }
    }
}

/// What the GAF does on a step where nothing is received.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutPolicy {
    /// Update with `y_k = ŷ_{k|k-1}`: zero innovation, covariance still
    /// contracted by the gain.
    #[default]
    Predicted,
    /// Time update only.
    Skip,
}

/// How the spread of the lagged predictions enters `P^{yy}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureCovariance {
    /// `Σ γ̄_s P^{zz}_s + Σ γ̄_s (1 - γ̄_s) ẑ_s ẑ_sᵀ`. Not invariant to a
    /// shift of the measurement origin.
    Uncentered,
    /// Exact covariance of the delay mixture:
    /// `Σ γ̄_s P^{zz}_s + Σ γ̄_s (ẑ_s - ŷ)(ẑ_s - ŷ)ᵀ`.
    #[default]
    Centered,
}

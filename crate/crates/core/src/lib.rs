//! Bayesian filtering for systems whose measurements travel over a lossy
//! network: each measurement is delayed by a Poisson-distributed number of
//! steps, never delivered twice, and dropped once its delay exceeds a
//! permissible bound.
//!
//! The crate is split along the estimation pipeline:
//!
//! - [`channel`]: the delay/dropout channel, both the generative simulator
//!   and the closed-form delay probabilities.
//! - [`models`]: the state-space model interface and the two benchmark
//!   systems (non-stationary growth model, coordinated-turn radar tracking).
//! - [`gauss`]: the Gaussian-approximated filter over a fixed-lag window,
//!   using a third-degree cubature rule.
//! - [`smc`]: the delay-grouped sequential Monte Carlo filter.
//! - [`baselines`]: the delay-unaware bootstrap particle filter and the
//!   mixture-likelihood delayed particle filter used for comparison.
//! - [`harness`]: scenario configuration, Monte Carlo campaigns, metrics and
//!   CSV/JSON export.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod gauss;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod smc;

pub use channel::{ChannelEvent, ChannelState, DelayProbabilities, DelayProfile, Outcome};
pub use error::{Error, Result};
pub use gauss::{CubatureRule, DropoutPolicy, GaussianBelief, MixtureCovariance, WindowBelief};
pub use harness::{CampaignResult, FilterKind, ScenarioConfig};
pub use models::{CoordinatedTurn, GrowthModel, LinearGaussian, SystemModel, Trajectory};
pub use smc::{DelayPosterior, Particle, ParticleSet};

/// Dense column vector used for states and measurements.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for covariances and gains.
pub type Matrix = nalgebra::DMatrix<f64>;

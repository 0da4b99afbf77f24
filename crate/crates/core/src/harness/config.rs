use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::DelayProfile;
use crate::error::{Error, Result};
use crate::gauss::{DropoutPolicy, MixtureCovariance};
use crate::models::{CoordinatedTurn, CtParams, GrowthModel, GrowthParams, SystemModel};
use crate::smc::Resampling;
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Gaf,
    Smc,
    StandardPf,
    PfRd,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [FilterKind::Gaf, FilterKind::Smc, FilterKind::StandardPf, FilterKind::PfRd];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Gaf => "gaf",
            FilterKind::Smc => "smc",
            FilterKind::StandardPf => "standard_pf",
            FilterKind::PfRd => "pf_rd",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Growth,
    CoordinatedTurn,
}

/// Model selection by name; `params` is checked against the named model's
/// parameter set and may be omitted for defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: ModelName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
}

impl ModelSpec {
    pub fn growth(params: GrowthParams) -> Self {
        ModelSpec { name: ModelName::Growth, params: Some(serde_json::to_value(params).expect("plain struct")) }
    }

    pub fn coordinated_turn(params: CtParams) -> Self {
        ModelSpec { name: ModelName::CoordinatedTurn, params: Some(serde_json::to_value(params).expect("plain struct")) }
    }

    fn params<T: serde::de::DeserializeOwned + Default>(&self) -> Result<T> {
        match &self.params {
            None => Ok(T::default()),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("model params: {e}"))),
        }
    }

    pub fn build(&self) -> Result<Box<dyn SystemModel>> {
        let model: Box<dyn SystemModel> = match self.name {
            ModelName::Growth => Box::new(GrowthModel::new(self.params()?).map_err(config_err)?),
            ModelName::CoordinatedTurn => Box::new(CoordinatedTurn::new(self.params()?).map_err(config_err)?),
        };
        Ok(model)
    }
}

/// `λ` as a constant or a per-step schedule (last entry held).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Constant(f64),
    Schedule(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub lambda: LambdaSpec,
    pub max_delay: usize,
}

impl ChannelSpec {
    pub fn profile(&self) -> Result<DelayProfile> {
        let schedule = match &self.lambda {
            LambdaSpec::Constant(l) => vec![*l],
            LambdaSpec::Schedule(s) => s.clone(),
        };
        DelayProfile::new(schedule, self.max_delay).map_err(config_err)
    }
}

fn default_true() -> bool {
    true
}

/// One Monte Carlo scenario, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelSpec,
    pub channel: ChannelSpec,
    pub steps: usize,
    pub mc_runs: usize,
    pub particles: usize,
    pub filters: Vec<FilterKind>,
    #[serde(default)]
    pub dropout_policy: DropoutPolicy,
    #[serde(default)]
    pub mixture_covariance: MixtureCovariance,
    #[serde(default)]
    pub resampling: Resampling,
    pub seed: u64,
    /// Record wall-clock times. Disable for byte-reproducible outputs.
    #[serde(default = "default_true")]
    pub timing: bool,
    /// Fixed `x_0` for the truth; drawn from the prior when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_initial_state: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.steps == 0 {
            return bad("steps must be >= 1");
        }
        if self.mc_runs == 0 {
            return bad("mc_runs must be >= 1");
        }
        if self.particles == 0 {
            return bad("particles must be >= 1");
        }
        if self.filters.is_empty() {
            return bad("filter roster is empty");
        }
        let mut seen = HashSet::new();
        if !self.filters.iter().all(|f| seen.insert(*f)) {
            return bad("filter roster lists a filter twice");
        }
        if let Resampling::EssBelow(f) = self.resampling {
            if !(f > 0.0 && f <= 1.0) {
                return bad("ess_below fraction must lie in (0, 1]");
            }
        }
        self.channel.profile()?;
        let model = self.model.build()?;
        if let Some(x0) = &self.truth_initial_state {
            if x0.len() != model.state_dim() {
                return Err(Error::Config(format!(
                    "truth_initial_state has {} entries, model state has {}",
                    x0.len(),
                    model.state_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<DelayProfile> {
        self.channel.profile()
    }

    pub fn build_model(&self) -> Result<Box<dyn SystemModel>> {
        self.model.build()
    }

    pub fn truth_x0(&self) -> Option<Vector> {
        self.truth_initial_state.as_ref().map(|v| Vector::from_vec(v.clone()))
    }

    /// Univariate growth model, `λ = 0.8`, `N = 3`, 500 particles, 50 steps,
    /// 100 runs.
    pub fn problem1() -> Self {
        ScenarioConfig {
            model: ModelSpec::growth(GrowthParams::default()),
            channel: ChannelSpec { lambda: LambdaSpec::Constant(0.8), max_delay: 3 },
            steps: 50,
            mc_runs: 100,
            particles: 500,
            filters: FilterKind::ALL.to_vec(),
            dropout_policy: DropoutPolicy::default(),
            mixture_covariance: MixtureCovariance::default(),
            resampling: Resampling::default(),
            seed: 1,
            timing: true,
            truth_initial_state: None,
            output_dir: None,
        }
    }

    /// Coordinated-turn radar tracking, `λ = 0.9`, `N = 3`, 5000 particles,
    /// 400 steps of 0.125 s.
    pub fn problem2() -> Self {
        ScenarioConfig {
            model: ModelSpec::coordinated_turn(CtParams::default()),
            channel: ChannelSpec { lambda: LambdaSpec::Constant(0.9), max_delay: 3 },
            steps: 400,
            mc_runs: 100,
            particles: 5000,
            ..Self::problem1()
        }
    }
}

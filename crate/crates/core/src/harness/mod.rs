//! Scenario configuration, Monte Carlo campaigns, metrics, channel
//! diagnostics and file export.

mod campaign;
mod config;
mod diagnostics;
mod export;
mod metrics;

pub use campaign::{
    run_campaign, simulate_run, CampaignResult, ChannelSummary, ComponentRmse, CovarianceCounters, DelayRmse,
    FilterOutput, FilterResult, FilterTrace, PolicyResult, RunFailure, RunTrace,
};
pub use config::{ChannelSpec, FilterKind, LambdaSpec, ModelName, ModelSpec, ScenarioConfig};
pub use diagnostics::{
    channel_diagnostics, chi_square_test, expected_counts, outcome_counts, ChannelReport, LagReport, SIGNIFICANCE,
    Z_LIMIT,
};
pub use export::{write_campaign, write_gaussian_csv, write_rmse_csv, write_run_traces, write_states_csv};
pub use metrics::{rmse, time_average, time_average_present};

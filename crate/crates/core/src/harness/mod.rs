//! Config ingestion, the per-trial loop, multi-trial experiments and rate
//! checks.

pub mod config;
pub mod experiment;
pub mod rates;
pub mod run;

pub use config::{
    load_config, parse_config, Bandwidth, ExperimentConfig, Initialization, Method, RateSettings, RawConfig, RunConfig,
    Scenario,
};
pub use experiment::{aggregate, run_experiment, AggregateRow, ExperimentSummary, GroupSummary, TrialResult};
pub use rates::{run_rate_scenario, write_rate_report, FitKind, RateEntry, RateFit, RateReport};
pub use run::{run_trial, run_with_observer, IterationState, Snapshot, TrialOutput, DIVERGENCE_BOUND};

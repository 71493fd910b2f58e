//! Experiment orchestration: configuration files, seed fan-out, learning
//! curve aggregation, run comparison, and the file formats they share.

mod config;
mod run;
mod stats;
mod tools;

pub use config::{
    EnvSection, ExperimentConfig, FixedGovernance, GovernanceSection, SearchGovernance, SearchSection,
};
pub use run::{
    build_env, run_experiment, run_search, run_seed, KernelSearch, KernelTrials, Manifest, RunReport,
    SeedFailure, ShapedEnv, OUTPUT_SCHEMA_VERSION,
};
pub use stats::{
    aggregate_seeds, compare_runs, emit_plot_data, mean_ci95, median_first_success, parse_plot_data,
    reward_auc, write_comparison, AggregateCurve, AggregatePoint, CompareMetric, ComparisonRow,
    PLOT_HEADER, Z95,
};
pub use tools::{default_context, render_kernel, rollout, RolloutPolicy};

/// Worker cap from `GOVREK_WORKERS`, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var("GOVREK_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

//! Synthetic prior-shift scenarios and the experiment harness built on them.

pub mod report;
pub mod scenario;
pub mod studies;

pub use report::{CellSummary, ExperimentReport, Loss, Record};
pub use scenario::{generate, preset_sizes, sine_theta, BinaryLaws, Law, ScenarioSpec, Sizes};
pub use studies::{
    run_combined_study, run_coverage_study, run_mse_study, run_multiclass_study, run_power_study,
    run_regression_study, Method,
};

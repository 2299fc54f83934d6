//! Metrics, test-time corruption and the scenario grid.

mod benchmark;
mod condition;
mod grid;
mod metrics;

pub use benchmark::{Benchmark, BENCHMARK_SEEDS};
pub use condition::{apply_condition, TestCondition};
pub use grid::{
    derive_seed, evaluate_models, evaluate_pairs, lambda_sweep, run_scenario_grid,
    run_scenario_grid_logged, sweep_csv, test_set, with_thread_pool, Aggregate, CellResult,
    Comparison, GridSettings, MetricSpace, Scenario, ScenarioReport, Summary, SweepRow,
    TrainingRun, Variant, THREADS_ENV,
};
pub use metrics::{
    compute_metrics, delta_improvement, paired_t_test, MetricAccumulator, Metrics, Significance,
    TTest,
};

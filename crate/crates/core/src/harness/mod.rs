//! Experiment orchestration: training-size schedules, replicated grids with
//! derived seeds, result files and summary tables.

mod config;
mod run;
mod schedule;
mod table;

pub use config::{ExperimentConfig, Method, Metric, OracleConfig, OracleCovariance, PRESETS};
pub use run::{
    cell_stream, effective_components, incompatibility_study, observed_stream, observed_summary, oracle_draws, run_experiment, sort_rows,
    ResultRow, PAIRS_PER_COMPONENT, RESULTS_SCHEMA_VERSION,
};
pub use schedule::{n_schedule, NRule};
pub use table::{aggregate, coverage_table, read_results, write_aggregates, write_results, write_run, write_timings, Aggregate, RunFiles};

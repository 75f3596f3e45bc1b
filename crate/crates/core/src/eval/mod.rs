//! Metrics, the benchmark grid runner and report rendering.

mod benchmark;
mod metrics;
mod report;

pub use self::benchmark::{
    run_benchmark, run_cell, BenchmarkGrid, BenchmarkInputs, BenchmarkOutcome, BenchmarkResult, CellKey, FailedCell,
    PlotSeries,
};
pub use self::metrics::{mae, mse, nmse, r2, rmse, MetricBundle};
pub use self::report::{emit_report, emit_timings, read_results_csv, ReportFormat, RunManifest};

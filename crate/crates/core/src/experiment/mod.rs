//! Experiment configuration, the four-setup grid, the property suite and
//! CSV/SVG reporting.

mod config;
mod properties;
mod run;
mod svg;

pub use config::{EvalConfig, ExperimentConfig, Setup, SweepConfig, TargetSpec, SCHEMA_VERSION};
pub use run::{
    initial_model, mean_std, run_experiment, run_grid, run_seed, train_run, training_data, GridCell, GridTable,
    MetricReport, RunMetrics, RunRecord,
};
pub use svg::{emit_svg, grid_curves, render_svg, Curve, CurvePoint};
pub use properties::{property_checks, run_property_suite, CheckOutcome, PropertyCheck, PropertyReport};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "EQUISCORE_THREADS";

/// Sizes the global thread pool from `EQUISCORE_THREADS` when it is set.
/// Returns the thread count in effect.
pub fn configure_threads() -> crate::Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| crate::Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        // a pool built earlier in the process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

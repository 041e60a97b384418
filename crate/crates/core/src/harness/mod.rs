//! JSON configuration, the Monte Carlo driver and its reports.
//!
//! Every replication draws from its own keyed seed, so a run's outputs are a
//! function of the configuration alone, whatever the thread count.

mod config;
mod estimate;
mod monte_carlo;

pub use config::{BoundsConfig, DgpConfig, McConfig, OracleConfig, OutputPaths};
pub use estimate::{
    build_model,     estimate_sample, fit_nuisance, oracle_for, oracle_nuisance, oracle_v_for, EstimateReport, LearnerReport,
};
pub use monte_carlo::{
    emit_reports, replication_seed, run_monte_carlo, run_replication, write_replications_csv, McContext, McRun,
    McSummary, Outcome, ReplicationRecord, ShapeSummary,
};

use crate::empirical_process::{bound_check, hoeffding_decompose, BoundReport, FunctionGrid, HoeffdingComponents, ProjectionMode, ScalarFn};
use crate::error::{Error, Result};
use crate::se_array::{simulate, Shape};

/// Runs the configured threshold-grid bound check.
pub fn run_bounds(config: &McConfig) -> Result<BoundReport> {
    let bounds = config.bounds.as_ref().ok_or_else(|| Error::Config("config has no `bounds` block".into()))?;
    let shape = config.shape_list()?.remove(0);
    let spec = config.dgp.spec(shape)?;
    let field = spec.field_index(&bounds.field).map_err(|e| Error::Config(e.to_string()))?;
    let grid = FunctionGrid::thresholds(field, &bounds.thresholds)?;
    let masks = bounds.masks(spec.shape().order())?;
    bound_check(&grid, &spec, &masks, &bounds.n_grid, bounds.moment_order, bounds.replications, config.seed)
}

/// Hoeffding components of x ↦ x_field, or of 1{x_field ≤ t}, on one
/// simulated sample.
pub fn run_decompose(
    config: &McConfig,
    shape: Shape,
    seed: u64,
    field: &str,
    threshold: Option<f64>,
) -> Result<HoeffdingComponents> {
    let spec = config.dgp.spec(shape)?;
    let j = spec.field_index(field).map_err(|e| Error::Config(e.to_string()))?;
    let sample = simulate(&spec, seed)?;
    let mode = match config.oracle {
        OracleConfig::MonteCarlo { draws, seed } => ProjectionMode::MonteCarlo { draws, seed },
        _ => ProjectionMode::Exact,
    };
    match threshold {
        Some(t) => hoeffding_decompose(&ScalarFn(move |r: &[f64]| f64::from(u8::from(r[j] <= t))), &spec, &sample, mode),
        None => hoeffding_decompose(&ScalarFn(move |r: &[f64]| r[j]), &spec, &sample, mode),
    }
}

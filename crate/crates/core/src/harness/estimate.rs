use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{default_oracle_draws, McConfig, OracleConfig};
use crate::empirical_process::ProjectionMode;
use crate::error::{Error, Result};
use crate::gmm::{solve_gmm, GmmFit, WeightingMode};
use crate::learners::LearnerConfig;
use crate::linalg;
use crate::models::{
    evaluate_scores, non_orthogonal_oracle_nuisance, oracle_psi0, oracle_v, plr_oracle_nuisance, MomentModel, Nuisance,
    OracleVariance,
};
use crate::se_array::{ClusteredSample, Design, Shape};
use crate::variance::{confidence_interval, v_hat, ClusterVarianceResult, ConfidenceInterval, ScoreArray};

/// Per-nuisance learner diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct LearnerReport {
    pub nuisance: String,
    pub lambda: Option<f64>,
    pub converged: bool,
}

/// One full pipeline run on a sample: nuisance fit, GMM, variance and
/// intervals.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub shape: Shape,
    pub model: &'static str,
    pub fit: GmmFit,
    pub variance: ClusterVarianceResult,
    pub intervals: Vec<ConfidenceInterval>,
    pub level: f64,
    pub learners: Vec<LearnerReport>,
    /// How θ̂⁽⁰⁾ was obtained for the two-step weight.
    pub initial_estimator: &'static str,
}

/// The true nuisance for the model under the configured design, when known.
pub fn oracle_nuisance(design: &Design, model: &dyn MomentModel) -> Option<Nuisance> {
    match (design, model.name()) {
        (_, _) if model.nuisance_names().is_empty() => Some(Nuisance::new()),
        (Design::Plr(d), "plr") => Some(plr_oracle_nuisance(d)),
        (Design::Plr(d), "non_orthogonal_plr") => Some(non_orthogonal_oracle_nuisance(d)),
        _ => None,
    }
}

/// Fits every nuisance of `model` on the full sample.
pub fn fit_nuisance(
    learner: &LearnerConfig,
    model: &dyn MomentModel,
    sample: &ClusteredSample,
    oracle: Option<&Nuisance>,
) -> Result<(Nuisance, Vec<LearnerReport>)> {
    let names = model.nuisance_names();
    if names.is_empty() {
        return Ok((Nuisance::new(), Vec::new()));
    }
    if learner.is_oracle() {
        let eta = oracle
            .cloned()
            .ok_or_else(|| Error::Config(format!("no oracle nuisance for model `{}` under this design", model.name())))?;
        return Ok((eta, Vec::new()));
    }
    let targets = model.nuisance_targets();
    if targets.len() != names.len() {
        return Err(Error::Config(format!("model `{}` nuisances cannot be learned by regression", model.name())));
    }
    let p = sample.records().next().map_or(0, |r| model.covariates(r).len());
    let mut x = DMatrix::zeros(sample.len(), p);
    for (i, r) in sample.records().enumerate() {
        for (j, v) in model.covariates(r).iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    let max_dim = sample.shape().max_dim();
    let mut eta = Nuisance::new();
    let mut reports = Vec::new();
    for (name, &t) in names.iter().zip(&targets) {
        let y: Vec<f64> = sample.records().map(|r| r[t]).collect();
        let fitted = learner.fit(&x, &y, max_dim)?.expect("non-oracle learner");
        reports.push(LearnerReport { nuisance: name.to_string(), lambda: fitted.lambda, converged: fitted.converged });
        eta = eta.with(*name, fitted.predictor);
    }
    Ok((eta, reports))
}

/// Runs the estimation pipeline of `config` on one sample.
pub fn estimate_sample(
    config: &McConfig,
    model: &dyn MomentModel,
    sample: &ClusteredSample,
    oracle: Option<&Nuisance>,
) -> Result<EstimateReport> {
    let (eta, learners) = fit_nuisance(&config.learner, model, sample, oracle)?;
    let fit = solve_gmm(model, sample, &eta, &config.estimation)?;
    let scores = ScoreArray::new(
        sample.shape().clone(),
        model.moment_dim(),
        evaluate_scores(model, sample, &fit.theta, &eta)?,
    )?;
    let variance = v_hat(&fit, &scores, config.variance)?;
    let intervals = confidence_interval(&fit.theta, &variance.std_errors, config.level)?;
    let initial_estimator = match (config.estimation.weighting.mode, &config.estimation.weighting.initial) {
        (WeightingMode::Identity, _) => "none",
        (WeightingMode::TwoStep, Some(_)) => "configured",
        (WeightingMode::TwoStep, None) => "identity-weighted first step",
    };
    Ok(EstimateReport {
        shape: sample.shape().clone(),
        model: model.name(),
        fit,
        variance,
        intervals,
        level: config.level,
        learners,
        initial_estimator,
    })
}

/// Oracle variance pieces for the configured design at `shape`.
pub fn oracle_for(
    config: &McConfig,
    model: &dyn MomentModel,
    shape: &Shape,
    eta0: &Nuisance,
) -> Result<Option<OracleVariance>> {
    let Some(theta0) = config.dgp.design.theta0() else { return Ok(None) };
    let spec = config.dgp.spec(shape.clone())?;
    let sampled = |draws, seed| ProjectionMode::MonteCarlo { draws, seed };
    let oracle = match &config.oracle {
        OracleConfig::None => return Ok(None),
        OracleConfig::MonteCarlo { draws, seed } => oracle_psi0(model, &spec, &theta0, eta0, sampled(*draws, *seed))?,
        OracleConfig::Exact => match oracle_psi0(model, &spec, &theta0, eta0, ProjectionMode::Exact) {
            Err(Error::ContinuousSupport(_)) | Err(Error::Domain(_)) => {
                oracle_psi0(model, &spec, &theta0, eta0, sampled(default_oracle_draws(), config.seed))?
            }
            other => other?,
        },
    };
    let q = model.moment_dim();
    let upsilon = match config.estimation.weighting.mode {
        WeightingMode::Identity => DMatrix::identity(q, q),
        WeightingMode::TwoStep => {
            let ridge = DMatrix::identity(q, q) * config.estimation.weighting.ridge;
            linalg::spd_inverse(&(&oracle.psi0 + ridge), "Ψ₀").unwrap_or_else(|_| DMatrix::identity(q, q))
        }
    };
    Ok(Some(oracle.with_upsilon(upsilon)))
}

/// V at `shape`, or `None` when the oracle is unavailable.
pub fn oracle_v_for(oracle: Option<&OracleVariance>, shape: &Shape) -> Result<Option<DMatrix<f64>>> {
    oracle.map(|o| o.for_shape(shape).and_then(|o| oracle_v(&o))).transpose()
}

pub fn build_model(config: &McConfig) -> Result<Arc<dyn MomentModel>> {
    let shape = config.shape_list()?.remove(0);
    let spec = config.dgp.spec(shape)?;
    config.model.build(spec.fields()).map_err(|e| match e {
        Error::MissingField(f) => Error::Config(format!("model field `{f}` not produced by the design")),
        other => other,
    })
}

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::sync::Arc;

use super::nuisance::{LinearPredictor, Nuisance};
use super::score::MomentModel;
use crate::empirical_process::Population;
use crate::error::{Error, Result};
use crate::se_array::rng::{self, tag};
use crate::se_array::ClusteredSample;

fn check_inputs(model: &dyn MomentModel, theta: &[f64], eta: &Nuisance) -> Result<()> {
    if theta.len() != model.param_dim() {
        return Err(Error::Domain(format!(
            "θ has {} entries, model `{}` expects {}",
            theta.len(),
            model.name(),
            model.param_dim()
        )));
    }
    eta.expect_names(model.nuisance_names())
}

/// ψ(x, θ, η) at a single record.
pub fn evaluate_score(model: &dyn MomentModel, record: &[f64], theta: &[f64], eta: &Nuisance) -> Result<Vec<f64>> {
    check_inputs(model, theta, eta)?;
    let mut out = vec![0.0; model.moment_dim()];
    model.score(record, theta, eta, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteScore(Vec::new()));
    }
    Ok(out)
}

/// ψ at every cell, row-major N × q. Cells with non-finite scores are
/// reported by their row-major position.
pub fn evaluate_scores(
    model: &dyn MomentModel,
    sample: &ClusteredSample,
    theta: &[f64],
    eta: &Nuisance,
) -> Result<Vec<f64>> {
    check_inputs(model, theta, eta)?;
    let q = model.moment_dim();
    let mut out = vec![0.0; sample.len() * q];
    let mut bad = Vec::new();
    for (lin, (r, o)) in sample.records().zip(out.chunks_exact_mut(q)).enumerate() {
        model.score(r, theta, eta, o);
        if o.iter().any(|v| !v.is_finite()) {
            bad.push(lin);
        }
    }
    if !bad.is_empty() {
        return Err(Error::NonFiniteScore(bad));
    }
    Ok(out)
}

/// Ē_N ψ(·, θ, η).
pub fn mean_score(model: &dyn MomentModel, sample: &ClusteredSample, theta: &[f64], eta: &Nuisance) -> Result<Vec<f64>> {
    let q = model.moment_dim();
    let scores = evaluate_scores(model, sample, theta, eta)?;
    let mut mean = vec![0.0; q];
    for row in scores.chunks_exact(q) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= sample.len() as f64);
    Ok(mean)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JacobianMethod {
    /// The model's analytic derivative, falling back to central differences.
    Analytic,
    /// Central differences with step `relative_step · max(1, |θ_j|)`.
    CentralDifference { relative_step: f64 },
}

impl JacobianMethod {
    pub fn central() -> Self {
        Self::CentralDifference { relative_step: f64::EPSILON.cbrt() }
    }
}

/// Ĵ_N(θ) = −∂_θ Ē_N ψ(·, θ, η), a q × d matrix.
pub fn score_jacobian(
    model: &dyn MomentModel,
    sample: &ClusteredSample,
    theta: &[f64],
    eta: &Nuisance,
    method: JacobianMethod,
) -> Result<DMatrix<f64>> {
    check_inputs(model, theta, eta)?;
    let (q, d) = (model.moment_dim(), model.param_dim());
    if let JacobianMethod::Analytic = method {
        let mut acc = vec![0.0; q * d];
        let mut buf = vec![0.0; q * d];
        let mut analytic = true;
        for r in sample.records() {
            if !model.score_derivative(r, theta, eta, &mut buf) {
                analytic = false;
                break;
            }
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a -= b;
            }
        }
        if analytic {
            let n = sample.len() as f64;
            return Ok(DMatrix::from_row_slice(q, d, &acc).map(|v| v / n));
        }
        return score_jacobian(model, sample, theta, eta, JacobianMethod::central());
    }
    let JacobianMethod::CentralDifference { relative_step } = method else { unreachable!() };
    let mut jac = DMatrix::zeros(q, d);
    for j in 0..d {
        let h = relative_step * theta[j].abs().max(1.0);
        let (mut up, mut down) = (theta.to_vec(), theta.to_vec());
        up[j] += h;
        down[j] -= h;
        let width = up[j] - down[j];
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::StepUnderflow);
        }
        let fu = mean_score(model, sample, &up, eta)?;
        let fd = mean_score(model, sample, &down, eta)?;
        for i in 0..q {
            jac[(i, j)] = -(fu[i] - fd[i]) / width;
        }
    }
    Ok(jac)
}

/// Step schedule for central differences with Richardson extrapolation:
/// h_i = initial / 2^i for i < levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepGrid {
    pub initial: f64,
    pub levels: usize,
    /// Accepted spread between the last two diagonal extrapolants, relative
    /// to max(1, |estimate|).
    pub tolerance: f64,
}

impl Default for StepGrid {
    fn default() -> Self {
        Self { initial: 0.1, levels: 4, tolerance: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    /// max_j |∂_τ E ψ_j(X, θ₀, η₀ + τ η̃)| at τ = 0, per direction.
    pub per_direction: Vec<f64>,
    pub max_abs: f64,
}

/// Estimates the pathwise derivative of the population moment in each
/// nuisance direction under the law `population`.
pub fn orthogonality_check(
    model: &dyn MomentModel,
    population: &Population,
    theta0: &[f64],
    eta0: &Nuisance,
    directions: &[Nuisance],
    steps: StepGrid,
) -> Result<OrthogonalityReport> {
    check_inputs(model, theta0, eta0)?;
    if steps.levels < 2 || !(steps.initial > 0.0) {
        return Err(Error::Domain("Richardson extrapolation needs two or more positive steps".into()));
    }
    let q = model.moment_dim();
    let moment = |eta: &Nuisance| -> Vec<f64> {
        let mut out = vec![0.0; q];
        let mut buf = vec![0.0; q];
        for (r, w) in population.iter() {
            model.score(r, theta0, eta, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += w * b;
            }
        }
        out
    };
    let mut per_direction = Vec::with_capacity(directions.len());
    for dir in directions {
        let mut table: Vec<Vec<Vec<f64>>> = Vec::with_capacity(steps.levels);
        for i in 0..steps.levels {
            let h = steps.initial / 2f64.powi(i as i32);
            let up = moment(&eta0.perturbed(dir, h)?);
            let down = moment(&eta0.perturbed(dir, -h)?);
            let mut row = vec![up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>()];
            for j in 1..=i {
                let factor = 4f64.powi(j as i32) - 1.0;
                let prev = &row[j - 1];
                let above = &table[i - 1][j - 1];
                row.push(prev.iter().zip(above).map(|(p, a)| p + (p - a) / factor).collect());
            }
            table.push(row);
        }
        let last = steps.levels - 1;
        let est = &table[last][last];
        let before = &table[last - 1][last - 1];
        let spread = est.iter().zip(before).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let size = est.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if spread > steps.tolerance * size.max(1.0) {
            return Err(Error::NonConvergentExtrapolation(spread));
        }
        per_direction.push(size);
    }
    let max_abs = per_direction.iter().copied().fold(0.0, f64::max);
    Ok(OrthogonalityReport { per_direction, max_abs })
}

/// `count` nuisance directions whose members are affine functions of the
/// covariates with unit-norm (intercept, slope) vectors.
pub fn random_linear_directions(names: &[&str], covariate_dim: usize, count: usize, seed: u64) -> Vec<Nuisance> {
    (0..count)
        .map(|c| {
            let mut r = rng::stream(seed, tag::DIRECTION, &[c as u64]);
            names.iter().fold(Nuisance::new(), |acc, name| {
                let mut v: Vec<f64> = (0..=covariate_dim).map(|_| r.sample(StandardNormal)).collect();
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                v.iter_mut().for_each(|a| *a /= norm);
                let coefs = v.split_off(1);
                acc.with(*name, Arc::new(LinearPredictor::new(v[0], coefs)))
            })
        })
        .collect()
}

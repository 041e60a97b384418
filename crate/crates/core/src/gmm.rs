//! Full-sample GMM: the nuisance is fitted on the same data the moments are
//! averaged over, and θ̂ minimizes ψ̂_N(θ)'Υ̂ψ̂_N(θ).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{mean_score, score_jacobian, serialize_matrix, JacobianMethod, MomentModel, Nuisance};
use crate::se_array::ClusteredSample;
use crate::variance::{psi_hat, ScoreArray};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingMode {
    Identity,
    /// Υ̂ = (Ψ̂_N(θ̂⁽⁰⁾) + εI)^{−1}.
    #[default]
    TwoStep,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightingSpec {
    pub mode: WeightingMode,
    pub ridge: f64,
    /// θ̂⁽⁰⁾ for the two-step weight. `None` runs an identity-weighted first
    /// step.
    pub initial: Option<Vec<f64>>,
}

impl WeightingSpec {
    pub fn identity() -> Self {
        Self { mode: WeightingMode::Identity, ..Self::default() }
    }

    pub fn two_step() -> Self {
        Self::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSpec {
    pub theta_start: Vec<f64>,
    /// Θ as a box, one (lower, upper) pair per coordinate.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub weighting: WeightingSpec,
    /// Bound on ‖Ĵ'Υ̂ψ̂‖.
    pub tolerance: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for GmmSpec {
    fn default() -> Self {
        Self {
            theta_start: vec![0.0],
            bounds: None,
            weighting: WeightingSpec::default(),
            tolerance: 1e-10,
            max_iter: 100,
            max_halvings: 30,
        }
    }
}

impl GmmSpec {
    pub fn new(theta_start: Vec<f64>) -> Self {
        Self { theta_start, ..Self::default() }
    }

    pub fn with_weighting(mut self, weighting: WeightingSpec) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    fn validate(&self, model: &dyn MomentModel) -> Result<()> {
        let d = model.param_dim();
        if self.theta_start.len() != d {
            return Err(Error::Config(format!("theta_start has {} entries, the model has {d}", self.theta_start.len())));
        }
        if !(self.weighting.ridge >= 0.0) {
            return Err(Error::Config(format!("ridge {} must be nonnegative", self.weighting.ridge)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if let Some(b) = &self.bounds {
            if b.len() != d || b.iter().any(|(lo, hi)| !(lo < hi)) {
                return Err(Error::Config("bounds need one nonempty interval per parameter".into()));
            }
        }
        if let Some(t) = &self.weighting.initial {
            if t.len() != d {
                return Err(Error::Config("initial theta has the wrong dimension".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GmmFit {
    pub theta: Vec<f64>,
    /// Ĵ_N(θ̂), q × d.
    #[serde(serialize_with = "serialize_matrix")]
    pub jacobian: DMatrix<f64>,
    /// Υ̂, q × q.
    #[serde(serialize_with = "serialize_matrix")]
    pub weighting: DMatrix<f64>,
    /// ψ̂_N(θ̂).
    pub moment: Vec<f64>,
    pub iterations: usize,
    pub foc_norm: f64,
    pub converged: bool,
    pub boundary: bool,
    pub rank_deficient: bool,
    /// θ̂⁽⁰⁾ behind a two-step weight.
    pub initial_theta: Option<Vec<f64>>,
}

/// ψ̂_N(θ) = N^{−1} Σ_i ψ(X_i, θ, η̂).
pub fn empirical_moment(
    model: &dyn MomentModel,
    sample: &ClusteredSample,
    theta: &[f64],
    eta: &Nuisance,
) -> Result<Vec<f64>> {
    mean_score(model, sample, theta, eta)
}

/// Υ̂ for the given mode. In two-step mode `theta_init` must be supplied.
pub fn weighting_matrix(
    model: &dyn MomentModel,
    sample: &ClusteredSample,
    theta_init: &[f64],
    eta: &Nuisance,
    spec: &WeightingSpec,
) -> Result<DMatrix<f64>> {
    let q = model.moment_dim();
    match spec.mode {
        WeightingMode::Identity => Ok(DMatrix::identity(q, q)),
        WeightingMode::TwoStep => {
            let values = crate::models::evaluate_scores(model, sample, theta_init, eta)?;
            let scores = ScoreArray::new(sample.shape().clone(), q, values)?;
            let middle = psi_hat(&scores) + DMatrix::identity(q, q) * spec.ridge;
            linalg::spd_inverse(&middle, "Ψ̂ + εI")
        }
    }
}

struct Problem<'a> {
    model: &'a dyn MomentModel,
    sample: &'a ClusteredSample,
    eta: &'a Nuisance,
    weight: &'a DMatrix<f64>,
}

struct Point {
    theta: Vec<f64>,
    moment: DVector<f64>,
    jacobian: DMatrix<f64>,
    objective: f64,
    foc: DVector<f64>,
}

impl Problem<'_> {
    fn objective(&self, theta: &[f64]) -> Result<(DVector<f64>, f64)> {
        let m = DVector::from_vec(mean_score(self.model, self.sample, theta, self.eta)?);
        let q = (m.transpose() * self.weight * &m)[(0, 0)];
        Ok((m, q))
    }

    fn point(&self, theta: Vec<f64>) -> Result<Point> {
        let (moment, objective) = self.objective(&theta)?;
        let jacobian = score_jacobian(self.model, self.sample, &theta, self.eta, JacobianMethod::Analytic)?;
        let foc = jacobian.transpose() * self.weight * &moment;
        Ok(Point { theta, moment, jacobian, objective, foc })
    }
}

fn clamp(theta: &mut [f64], bounds: Option<&[(f64, f64)]>) {
    if let Some(b) = bounds {
        for (t, (lo, hi)) in theta.iter_mut().zip(b) {
            *t = t.clamp(*lo, *hi);
        }
    }
}

fn on_boundary(theta: &[f64], bounds: Option<&[(f64, f64)]>) -> bool {
    bounds.is_some_and(|b| {
        theta.iter().zip(b).any(|(t, (lo, hi))| {
            let slack = 1e-9 * (hi - lo).max(1.0);
            *t <= lo + slack || *t >= hi - slack
        })
    })
}

fn gram_rank_deficient(jacobian: &DMatrix<f64>, weight: &DMatrix<f64>) -> bool {
    let gram = jacobian.transpose() * weight * jacobian;
    let ev = linalg::eigenvalues(&gram);
    let max = ev.last().copied().unwrap_or(0.0);
    !(max > 0.0) || ev[0] <= 1e-12 * max
}

/// Minimizes ψ̂'Υψ̂ for a fixed Υ by damped Gauss–Newton, with a bracketing
/// search on the first-order condition when d = 1 and Newton stalls.
pub fn solve_with_weighting(
    model: &dyn MomentModel,
    sample: &ClusteredSample,
    eta: &Nuisance,
    weight: &DMatrix<f64>,
    spec: &GmmSpec,
) -> Result<GmmFit> {
    spec.validate(model)?;
    let q = model.moment_dim();
    if weight.nrows() != q || weight.ncols() != q {
        return Err(Error::InvalidShape(format!("weighting matrix must be {q} × {q}")));
    }
    let problem = Problem { model, sample, eta, weight };
    let bounds = spec.bounds.as_deref();
    let mut start = spec.theta_start.clone();
    clamp(&mut start, bounds);
    let mut current = problem.point(start)?;
    let mut iterations = 0;
    let mut stalled = false;
    while current.foc.norm() > spec.tolerance && iterations < spec.max_iter {
        iterations += 1;
        let gram = current.jacobian.transpose() * weight * &current.jacobian;
        let Some(step) = gram.lu().solve(&current.foc) else {
            stalled = true;
            break;
        };
        if step.iter().any(|s| !s.is_finite()) {
            stalled = true;
            break;
        }
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=spec.max_halvings {
            let mut trial: Vec<f64> = current.theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            clamp(&mut trial, bounds);
            let (_, obj) = problem.objective(&trial)?;
            if obj <= current.objective {
                accepted = Some(trial);
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some(trial) if trial != current.theta => current = problem.point(trial)?,
            _ => {
                stalled = true;
                break;
            }
        }
    }
    if current.foc.norm() > spec.tolerance && model.param_dim() == 1 {
        let _ = stalled;
        if let Some(theta) = bracket_foc(&problem, current.theta[0], bounds.map(|b| b[0]), spec.tolerance)? {
            let candidate = problem.point(vec![theta])?;
            if candidate.foc.norm() < current.foc.norm() {
                current = candidate;
            }
        }
    }
    let foc_norm = current.foc.norm();
    Ok(GmmFit {
        boundary: on_boundary(&current.theta, bounds),
        rank_deficient: gram_rank_deficient(&current.jacobian, weight),
        converged: foc_norm <= spec.tolerance,
        foc_norm,
        iterations,
        moment: current.moment.iter().copied().collect(),
        jacobian: current.jacobian,
        weighting: weight.clone(),
        theta: current.theta,
        initial_theta: None,
    })
}

/// Sign-change search on the scalar FOC around `center`, then bisection.
fn bracket_foc(problem: &Problem<'_>, center: f64, bound: Option<(f64, f64)>, tol: f64) -> Result<Option<f64>> {
    let foc = |t: f64| -> Result<f64> { Ok(problem.point(vec![t])?.foc[0]) };
    let (lo_bound, hi_bound) = bound.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let f0 = foc(center)?;
    let mut width = 1e-3 * center.abs().max(1.0);
    let mut bracket = None;
    for _ in 0..80 {
        let (lo, hi) = ((center - width).max(lo_bound), (center + width).min(hi_bound));
        let (flo, fhi) = (foc(lo)?, foc(hi)?);
        if flo.signum() != f0.signum() {
            bracket = Some((lo, center, flo));
            break;
        }
        if fhi.signum() != f0.signum() {
            bracket = Some((center, hi, f0));
            break;
        }
        if lo <= lo_bound && hi >= hi_bound {
            break;
        }
        width *= 2.0;
    }
    let Some((mut a, mut b, mut fa)) = bracket else { return Ok(None) };
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = foc(mid)?;
        if fm.abs() <= tol || mid == a || mid == b {
            return Ok(Some(mid));
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

/// The debiased GMM estimator with weighting per `spec.weighting`.
pub fn solve_gmm(model: &dyn MomentModel, sample: &ClusteredSample, eta: &Nuisance, spec: &GmmSpec) -> Result<GmmFit> {
    spec.validate(model)?;
    let q = model.moment_dim();
    match spec.weighting.mode {
        WeightingMode::Identity => solve_with_weighting(model, sample, eta, &DMatrix::identity(q, q), spec),
        WeightingMode::TwoStep => {
            let initial = match &spec.weighting.initial {
                Some(t) => t.clone(),
                None => solve_with_weighting(model, sample, eta, &DMatrix::identity(q, q), spec)?.theta,
            };
            let weight = weighting_matrix(model, sample, &initial, eta, &spec.weighting)?;
            let second = GmmSpec { theta_start: initial.clone(), ..spec.clone() };
            let mut fit = solve_with_weighting(model, sample, eta, &weight, &second)?;
            fit.initial_theta = Some(initial);
            Ok(fit)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{plr_oracle_nuisance, IvModel, LocationModel, PlrModel};
    use crate::se_array::{simulate, PlrDesign, Shape};

    fn one_way(fields: &[&str], rows: &[&[f64]]) -> ClusteredSample {
        let shape = Shape::new(vec![rows.len()]).unwrap();
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        ClusteredSample::new(shape, fields.iter().map(|s| s.to_string()).collect(), values).unwrap()
    }

    #[test]
    fn location_mean() {
        let s = one_way(&["y"], &[&[1.0], &[2.0], &[3.0], &[6.0]]);
        let m = LocationModel::new(0);
        let eta = Nuisance::new();
        assert_eq!(empirical_moment(&m, &s, &[3.0], &eta).unwrap(), vec![0.0]);
        assert!((empirical_moment(&m, &s, &[3.5], &eta).unwrap()[0] + 0.5).abs() < 1e-15);
        for w in [WeightingSpec::identity(), WeightingSpec::two_step()] {
            let fit = solve_gmm(&m, &s, &eta, &GmmSpec::new(vec![0.0]).with_weighting(w)).unwrap();
            assert!((fit.theta[0] - 3.0).abs() < 1e-12);
            assert!(fit.converged && !fit.boundary && !fit.rank_deficient);
        }
    }

    #[test]
    fn iv_ratio() {
        let s = one_way(&["y", "d", "z"], &[&[2.0, 1.0, 1.0], &[4.0, 1.0, 2.0]]);
        let m = IvModel::new(0, 1, vec![2]).unwrap();
        let eta = Nuisance::new();
        assert!(empirical_moment(&m, &s, &[10.0 / 3.0], &eta).unwrap()[0].abs() < 1e-14);
        let fit = solve_gmm(&m, &s, &eta, &GmmSpec::new(vec![0.0])).unwrap();
        assert!((fit.theta[0] - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_two_step_weight() {
        // ψ = y − θ at θ = 0 with y = ±2 across a one-way array: Ψ̂ = 4.
        let s = one_way(&["y"], &[&[2.0], &[-2.0]]);
        let w = weighting_matrix(&LocationModel::new(0), &s, &[0.0], &Nuisance::new(), &WeightingSpec::two_step())
            .unwrap();
        assert!((w[(0, 0)] - 0.25).abs() < 1e-15);
        let id = weighting_matrix(&LocationModel::new(0), &s, &[0.0], &Nuisance::new(), &WeightingSpec::identity())
            .unwrap();
        assert_eq!(id[(0, 0)], 1.0);
        let zero = one_way(&["y"], &[&[0.0], &[0.0]]);
        assert!(weighting_matrix(&LocationModel::new(0), &zero, &[0.0], &Nuisance::new(), &WeightingSpec::two_step())
            .is_err());
    }

    #[test]
    fn plr_noiseless_recovers_theta0() {
        let design = PlrDesign::default();
        let spec = design.spec(Shape::square(2, 6).unwrap()).unwrap();
        let simulated = simulate(&spec, 3).unwrap();
        let p = design.covariate_count();
        let mut values = Vec::new();
        for r in simulated.records() {
            let g: f64 = r[2..].iter().zip(&design.beta_g).map(|(x, b)| x * b).sum();
            values.push(design.theta0 * r[1] + g);
            values.extend_from_slice(&r[1..]);
        }
        let s = ClusteredSample::new(simulated.shape().clone(), simulated.fields().to_vec(), values).unwrap();
        let model = PlrModel::new(0, 1, (2..2 + p).collect());
        let eta = plr_oracle_nuisance(&design);
        let fit = solve_gmm(&model, &s, &eta, &GmmSpec::new(vec![0.0]).with_weighting(WeightingSpec::identity()))
            .unwrap();
        assert!((fit.theta[0] - design.theta0).abs() < 1e-12);
    }

    #[test]
    fn overidentified_matches_weighted_least_squares() {
        let s = one_way(
            &["y", "d", "z1", "z2"],
            &[&[1.0, 0.5, 1.0, 0.0], &[2.0, 1.5, 0.0, 1.0], &[0.5, 1.0, 1.0, 1.0], &[3.0, 2.0, 2.0, -1.0]],
        );
        let m = IvModel::new(0, 1, vec![2, 3]).unwrap();
        let eta = Nuisance::new();
        let w = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let fit = solve_with_weighting(&m, &s, &eta, &w, &GmmSpec::new(vec![0.0])).unwrap();
        // ψ̂(θ) = a − θ b with a = Ē z y, b = Ē z d.
        let (mut a, mut b) = (DVector::zeros(2), DVector::zeros(2));
        for r in s.records() {
            a += DVector::from_vec(vec![r[2] * r[0], r[3] * r[0]]) / 4.0;
            b += DVector::from_vec(vec![r[2] * r[1], r[3] * r[1]]) / 4.0;
        }
        let closed = (b.transpose() * &w * &a)[(0, 0)] / (b.transpose() * &w * &b)[(0, 0)];
        assert!((fit.theta[0] - closed).abs() < 1e-10);
        let scaled = solve_with_weighting(&m, &s, &eta, &(w * 7.0), &GmmSpec::new(vec![0.0])).unwrap();
        assert!((scaled.theta[0] - closed).abs() < 1e-10);
    }

    #[test]
    fn boundary_and_rank_flags() {
        let s = one_way(&["y"], &[&[1.0], &[2.0], &[3.0], &[6.0]]);
        let m = LocationModel::new(0);
        let spec = GmmSpec::new(vec![0.0]).with_weighting(WeightingSpec::identity()).with_bounds(vec![(-1.0, 2.0)]);
        let fit = solve_gmm(&m, &s, &Nuisance::new(), &spec).unwrap();
        assert!(fit.boundary && !fit.converged);
        assert_eq!(fit.theta, vec![2.0]);

        let flat = one_way(&["y", "d", "z"], &[&[1.0, 0.0, 1.0], &[2.0, 0.0, 2.0]]);
        let iv = IvModel::new(0, 1, vec![2]).unwrap();
        let fit = solve_gmm(&iv, &flat, &Nuisance::new(), &GmmSpec::new(vec![0.0]).with_weighting(WeightingSpec::identity()))
            .unwrap();
        assert!(fit.rank_deficient);
    }

    #[test]
    fn spec_validation() {
        let s = one_way(&["y"], &[&[1.0]]);
        let m = LocationModel::new(0);
        assert!(solve_gmm(&m, &s, &Nuisance::new(), &GmmSpec::new(vec![0.0, 1.0])).is_err());
        let mut bad = GmmSpec::new(vec![0.0]);
        bad.weighting.ridge = -1.0;
        assert!(solve_gmm(&m, &s, &Nuisance::new(), &bad).is_err());
    }
}

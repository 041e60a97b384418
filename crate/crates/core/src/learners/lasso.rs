use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::models::Predictor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Identity,
    Logistic,
}

/// Settings for an ℓ¹-penalised linear or logistic fit on standardised
/// features with an unpenalised intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoSpec {
    pub lambda: f64,
    #[serde(default)]
    pub link: Link,
    #[serde(default = "LassoSpec::default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "LassoSpec::default_tol")]
    pub tol: f64,
}

impl LassoSpec {
    fn default_max_iter() -> usize {
        1000
    }

    fn default_tol() -> f64 {
        1e-10
    }

    pub fn new(lambda: f64) -> Self {
        Self { lambda, link: Link::Identity, max_iter: Self::default_max_iter(), tol: Self::default_tol() }
    }

    pub fn logistic(lambda: f64) -> Self {
        Self { link: Link::Logistic, ..Self::new(lambda) }
    }
}

/// A fitted lasso on the original feature scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LassoFit {
    pub link: Link,
    pub intercept: f64,
    pub coefs: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalised objective after each sweep.
    pub objective_trace: Vec<f64>,
}

impl Predictor for LassoFit {
    fn predict(&self, x: &[f64]) -> f64 {
        let eta = self.intercept + self.coefs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
        match self.link {
            Link::Identity => eta,
            Link::Logistic => logistic(eta),
        }
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

struct Standardized {
    z: DMatrix<f64>,
    means: Vec<f64>,
    /// Zero for constant columns, which are left out of the fit.
    scales: Vec<f64>,
}

fn standardize(x: &DMatrix<f64>) -> Standardized {
    let n = x.nrows() as f64;
    let mut z = x.clone();
    let mut means = Vec::with_capacity(x.ncols());
    let mut scales = Vec::with_capacity(x.ncols());
    for (j, mut col) in z.column_iter_mut().enumerate() {
        let m = x.column(j).sum() / n;
        let sd = (x.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        let s = if sd > 1e-12 * (1.0 + m.abs()) { sd } else { 0.0 };
        for v in col.iter_mut() {
            *v = if s > 0.0 { (*v - m) / s } else { 0.0 };
        }
        means.push(m);
        scales.push(s);
    }
    Standardized { z, means, scales }
}

fn check_inputs(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<()> {
    if x.nrows() != y.len() || y.is_empty() {
        return Err(Error::InvalidShape(format!("{} feature rows for {} targets", x.nrows(), y.len())));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("penalty λ = {lambda} must be finite and non-negative")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite learner input".into()));
    }
    Ok(())
}

/// Cyclic coordinate descent with soft-thresholding. Logistic fits wrap it
/// in iteratively reweighted least squares.
pub fn fit_lasso(spec: &LassoSpec, x: &DMatrix<f64>, y: &[f64]) -> Result<LassoFit> {
    check_inputs(x, y, spec.lambda)?;
    let st = standardize(x);
    let (b0, b, iterations, converged, trace) = match spec.link {
        Link::Identity => gaussian_cd(&st, y, spec),
        Link::Logistic => {
            if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Domain("logistic targets must lie in [0, 1]".into()));
            }
            logistic_irls(&st, y, spec)
        }
    };
    let coefs: Vec<f64> = b
        .iter()
        .zip(&st.scales)
        .map(|(bj, s)| if *s > 0.0 { bj / s } else { 0.0 })
        .collect();
    let intercept = b0 - coefs.iter().zip(&st.means).map(|(c, m)| c * m).sum::<f64>();
    Ok(LassoFit { link: spec.link, intercept, coefs, lambda: spec.lambda, iterations, converged, objective_trace: trace })
}

type CdResult = (f64, Vec<f64>, usize, bool, Vec<f64>);

fn gaussian_cd(st: &Standardized, y: &[f64], spec: &LassoSpec) -> CdResult {
    let n = y.len() as f64;
    let p = st.z.ncols();
    let ybar = y.iter().sum::<f64>() / n;
    let mut resid: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let mut b = vec![0.0; p];
    let objective = |r: &[f64], b: &[f64]| {
        r.iter().map(|v| v * v).sum::<f64>() / (2.0 * n) + spec.lambda * b.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut trace = Vec::new();
    for it in 1..=spec.max_iter {
        let mut max_change = 0.0f64;
        for j in 0..p {
            if st.scales[j] == 0.0 {
                continue;
            }
            let col = st.z.column(j);
            let rho = col.dot(&nalgebra::DVectorView::from_slice(&resid, resid.len())) / n + b[j];
            let new = soft_threshold(rho, spec.lambda);
            let delta = new - b[j];
            if delta != 0.0 {
                for (r, z) in resid.iter_mut().zip(col.iter()) {
                    *r -= z * delta;
                }
                b[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        trace.push(objective(&resid, &b));
        if max_change < spec.tol {
            return (ybar, b, it, true, trace);
        }
    }
    (ybar, b, spec.max_iter, false, trace)
}

fn logistic_objective(st: &Standardized, y: &[f64], b0: f64, b: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let eta = &st.z * nalgebra::DVector::from_column_slice(b);
    let nll: f64 = eta
        .iter()
        .zip(y)
        .map(|(e, yi)| {
            let t = b0 + e;
            let softplus = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
            softplus - yi * t
        })
        .sum();
    nll / n + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
}

fn logistic_irls(st: &Standardized, y: &[f64], spec: &LassoSpec) -> CdResult {
    let n = y.len() as f64;
    let p = st.z.ncols();
    let ybar = (y.iter().sum::<f64>() / n).clamp(1e-6, 1.0 - 1e-6);
    let mut b0 = (ybar / (1.0 - ybar)).ln();
    let mut b = vec![0.0; p];
    let mut trace = vec![];
    let mut prev = logistic_objective(st, y, b0, &b, spec.lambda);
    for it in 1..=spec.max_iter {
        let eta: Vec<f64> = (0..y.len())
            .map(|i| b0 + (0..p).map(|j| st.z[(i, j)] * b[j]).sum::<f64>())
            .collect();
        let prob: Vec<f64> = eta.iter().map(|&t| logistic(t)).collect();
        let w: Vec<f64> = prob.iter().map(|q| (q * (1.0 - q)).max(1e-5)).collect();
        let work: Vec<f64> = (0..y.len()).map(|i| eta[i] + (y[i] - prob[i]) / w[i]).collect();
        // Weighted lasso on the working response by coordinate descent.
        let (mut c0, mut c) = (b0, b.clone());
        let mut resid: Vec<f64> = (0..y.len()).map(|i| work[i] - eta[i]).collect();
        let wsum: f64 = w.iter().sum();
        for _ in 0..spec.max_iter {
            let mut change = 0.0f64;
            let d0 = resid.iter().zip(&w).map(|(r, wi)| r * wi).sum::<f64>() / wsum;
            c0 += d0;
            resid.iter_mut().for_each(|r| *r -= d0);
            change = change.max(d0.abs());
            for j in 0..p {
                if st.scales[j] == 0.0 {
                    continue;
                }
                let col = st.z.column(j);
                let denom: f64 = col.iter().zip(&w).map(|(z, wi)| wi * z * z).sum::<f64>() / n;
                let num: f64 = col.iter().zip(&w).zip(&resid).map(|((z, wi), r)| wi * z * r).sum::<f64>() / n;
                let new = soft_threshold(num + denom * c[j], spec.lambda) / denom;
                let delta = new - c[j];
                if delta != 0.0 {
                    for (r, z) in resid.iter_mut().zip(col.iter()) {
                        *r -= z * delta;
                    }
                    c[j] = new;
                }
                change = change.max(delta.abs());
            }
            if change < spec.tol {
                break;
            }
        }
        // Step halving keeps the penalised likelihood from increasing.
        let mut step = 1.0;
        let mut next = logistic_objective(st, y, c0, &c, spec.lambda);
        while next > prev && step > 1e-8 {
            step *= 0.5;
            let t0 = b0 + step * (c0 - b0);
            let t: Vec<f64> = b.iter().zip(&c).map(|(a, z)| a + step * (z - a)).collect();
            next = logistic_objective(st, y, t0, &t, spec.lambda);
            if next <= prev {
                c0 = t0;
                c = t;
            }
        }
        let max_change = b.iter().zip(&c).map(|(a, z)| (a - z).abs()).fold((b0 - c0).abs(), f64::max);
        if next <= prev {
            b0 = c0;
            b = c;
            prev = next;
        }
        trace.push(prev);
        if max_change < spec.tol || step <= 1e-8 {
            return (b0, b, it, true, trace);
        }
    }
    (b0, b, spec.max_iter, false, trace)
}

/// Default penalty Φ^{-1}(1 − 1/N̄) · max_j sd(z_j (y − ȳ)) / √N, with z_j
/// the standardised features and N the number of observations.
pub fn default_penalty(x: &DMatrix<f64>, y: &[f64], max_dim: usize) -> Result<f64> {
    check_inputs(x, y, 0.0)?;
    if max_dim < 2 {
        return Err(Error::Domain("the default penalty needs N̄ ≥ 2".into()));
    }
    let st = standardize(x);
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let quantile = Normal::standard().inverse_cdf(1.0 - 1.0 / max_dim as f64);
    let mut worst = 0.0f64;
    for col in st.z.column_iter() {
        let prods: Vec<f64> = col.iter().zip(y).map(|(z, v)| z * (v - ybar)).collect();
        let m = prods.iter().sum::<f64>() / n;
        let sd = (prods.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        worst = worst.max(sd);
    }
    Ok(quantile * worst / n.sqrt())
}

//! Multiway cluster-robust middle matrices, sandwich variances and normal
//! confidence intervals.
//!
//! For a mask e, pairs of cells sharing every coordinate in supp(e) are
//! collected by summing scores within each joint cluster, so each term costs
//! O(N q²) rather than O(N² q²). Cluster sums are not small-sample
//! corrected.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gmm::GmmFit;
use crate::linalg;
use crate::models::serialize_matrix;
use crate::se_array::{Mask, Shape};

/// One score vector ψ_i ∈ ℝ^q per cell, row-major over cells.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreArray {
    shape: Shape,
    dim: usize,
    values: Vec<f64>,
}

impl ScoreArray {
    pub fn new(shape: Shape, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != shape.cell_count() * dim {
            return Err(Error::InvalidShape(format!(
                "{} score values for {} cells of dimension {dim}",
                values.len(),
                shape.cell_count()
            )));
        }
        Ok(Self { shape, dim, values })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, lin: usize) -> &[f64] {
        &self.values[lin * self.dim..(lin + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// (n/N²) Σ_c S_c S_c' over the joint clusters of supp(e).
fn clustered_outer(scores: &ScoreArray, e: Mask) -> DMatrix<f64> {
    let shape = &scores.shape;
    let q = scores.dim;
    let mut sums = vec![0.0; shape.masked_size(e) * q];
    for lin in 0..shape.cell_count() {
        let c = shape.masked_linear_index(e, &shape.cell_at(lin));
        for (s, v) in sums[c * q..(c + 1) * q].iter_mut().zip(scores.row(lin)) {
            *s += v;
        }
    }
    let mut out = DMatrix::zeros(q, q);
    for s in sums.chunks_exact(q) {
        for a in 0..q {
            for b in 0..q {
                out[(a, b)] += s[a] * s[b];
            }
        }
    }
    let total = shape.cell_count() as f64;
    out * (shape.min_dim() as f64 / (total * total))
}

fn check_mask(shape: &Shape, e: Mask) -> Result<()> {
    if e.order() != shape.order() || e.is_zero() {
        return Err(Error::InvalidMask(format!("mask {e} for shape {shape}")));
    }
    Ok(())
}

/// Ψ̂_{N,k} = (n/N²) Σ_{i,j: i_k = j_k} ψ_i ψ_j' (k is 0-based).
pub fn psi_hat_k(scores: &ScoreArray, k: usize) -> Result<DMatrix<f64>> {
    let order = scores.shape.order();
    if k >= order {
        return Err(Error::InvalidShape(format!("dimension {} of an order-{order} array", k + 1)));
    }
    Ok(clustered_outer(scores, Mask::unit(order, k)))
}

/// Ψ̂_N = Σ_k Ψ̂_{N,k}.
pub fn psi_hat(scores: &ScoreArray) -> DMatrix<f64> {
    let order = scores.shape.order();
    (0..order).fold(DMatrix::zeros(scores.dim, scores.dim), |acc, k| {
        acc + clustered_outer(scores, Mask::unit(order, k))
    })
}

/// Ψ̃_{N,e} = (n/N²) Σ_{i,j sharing every coordinate in supp(e)} ψ_i ψ_j'.
pub fn psi_tilde_e(scores: &ScoreArray, e: Mask) -> Result<DMatrix<f64>> {
    check_mask(&scores.shape, e)?;
    Ok(clustered_outer(scores, e))
}

/// The inclusion–exclusion estimator Σ_e (−1)^{|e|+1} Ψ̃_{N,e}. Not
/// necessarily positive semi-definite.
pub fn cgm_psi(scores: &ScoreArray) -> DMatrix<f64> {
    cgm_terms(scores).into_iter().fold(DMatrix::zeros(scores.dim, scores.dim), |acc, (e, m)| {
        if e.weight() % 2 == 1 {
            acc + m
        } else {
            acc - m
        }
    })
}

fn cgm_terms(scores: &ScoreArray) -> Vec<(Mask, DMatrix<f64>)> {
    Mask::all_nonzero(scores.shape.order()).into_iter().map(|e| (e, clustered_outer(scores, e))).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Sum of per-dimension terms; PSD by construction.
    #[default]
    Psihat,
    /// Inclusion–exclusion over all masks.
    Cgm,
}

#[derive(Clone, Debug, Serialize)]
pub struct MaskTerm {
    pub mask: Mask,
    #[serde(serialize_with = "serialize_matrix")]
    pub value: DMatrix<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClusterVarianceResult {
    pub mode: VarianceMode,
    #[serde(serialize_with = "serialize_matrices")]
    pub per_dimension: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "serialize_matrix")]
    pub psi_hat: DMatrix<f64>,
    pub per_mask: Option<Vec<MaskTerm>>,
    #[serde(serialize_with = "serialize_optional")]
    pub cgm: Option<DMatrix<f64>>,
    #[serde(serialize_with = "serialize_matrix")]
    pub v_hat: DMatrix<f64>,
    /// √(diag V̂ / n).
    pub std_errors: Vec<f64>,
    /// Smallest eigenvalue of each Ψ̂_{N,k}.
    pub per_dimension_min_eigenvalues: Vec<f64>,
    /// Smallest eigenvalue of the middle matrix actually used.
    pub middle_min_eigenvalue: f64,
}

fn serialize_matrices<S: serde::Serializer>(v: &[DMatrix<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(crate::models::matrix_rows))
}

fn serialize_optional<S: serde::Serializer>(v: &Option<DMatrix<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(m) => s.serialize_some(&crate::models::matrix_rows(m)),
        None => s.serialize_none(),
    }
}

/// V̂ and standard errors at a GMM fit from the scores at (θ̂, η̂).
pub fn v_hat(fit: &GmmFit, scores: &ScoreArray, mode: VarianceMode) -> Result<ClusterVarianceResult> {
    if scores.dim != fit.jacobian.nrows() {
        return Err(Error::InvalidShape(format!(
            "scores of dimension {} for a fit with {} moments",
            scores.dim,
            fit.jacobian.nrows()
        )));
    }
    let order = scores.shape.order();
    let per_dimension: Vec<DMatrix<f64>> =
        (0..order).map(|k| linalg::symmetrize(&clustered_outer(scores, Mask::unit(order, k)))).collect();
    let psi = per_dimension.iter().fold(DMatrix::zeros(scores.dim, scores.dim), |a, m| a + m);
    let (per_mask, cgm) = match mode {
        VarianceMode::Psihat => (None, None),
        VarianceMode::Cgm => {
            let terms = cgm_terms(scores);
            let total = linalg::symmetrize(&cgm_psi(scores));
            (Some(terms.into_iter().map(|(mask, value)| MaskTerm { mask, value }).collect()), Some(total))
        }
    };
    let middle = cgm.as_ref().unwrap_or(&psi);
    let v = linalg::sandwich(&fit.jacobian, &fit.weighting, middle)?;
    let n = scores.shape.min_dim() as f64;
    let std_errors = (0..v.nrows()).map(|j| (v[(j, j)].max(0.0) / n).sqrt()).collect();
    Ok(ClusterVarianceResult {
        mode,
        per_dimension_min_eigenvalues: per_dimension.iter().map(linalg::min_eigenvalue).collect(),
        middle_min_eigenvalue: linalg::min_eigenvalue(middle),
        per_dimension,
        psi_hat: psi,
        per_mask,
        cgm,
        v_hat: v,
        std_errors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// θ̂_j ± z_{(1+level)/2} se_j.
pub fn confidence_interval(theta: &[f64], std_errors: &[f64], level: f64) -> Result<Vec<ConfidenceInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level {level} outside (0, 1)")));
    }
    if theta.len() != std_errors.len() {
        return Err(Error::InvalidShape("one standard error per coordinate is required".into()));
    }
    let z = normal_quantile(0.5 + level / 2.0);
    Ok(theta
        .iter()
        .zip(std_errors)
        .map(|(t, s)| ConfidenceInterval { lower: t - z * s, upper: t + z * s })
        .collect())
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(shape: &[usize], v: &[f64]) -> ScoreArray {
        ScoreArray::new(Shape::new(shape.to_vec()).unwrap(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn two_by_two_examples() {
        let s = scalar(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert!((psi_hat_k(&s, 0).unwrap()[(0, 0)] - 7.25).abs() < 1e-14);
        assert!((psi_hat_k(&s, 1).unwrap()[(0, 0)] - 6.5).abs() < 1e-14);
        assert!((psi_hat(&s)[(0, 0)] - 13.75).abs() < 1e-14);
        assert!((cgm_psi(&s)[(0, 0)] - 10.0).abs() < 1e-14);
        let full = psi_tilde_e(&s, Mask::full(2)).unwrap()[(0, 0)];
        assert!((cgm_psi(&s)[(0, 0)] - (7.25 + 6.5 - full)).abs() < 1e-14);
    }

    #[test]
    fn constant_scores() {
        let s = scalar(&[3, 5], &[2.0; 15]);
        // (n/N_k) c²
        assert!((psi_hat_k(&s, 0).unwrap()[(0, 0)] - 3.0 / 3.0 * 4.0).abs() < 1e-12);
        assert!((psi_hat_k(&s, 1).unwrap()[(0, 0)] - 3.0 / 5.0 * 4.0).abs() < 1e-12);
        assert_eq!(psi_hat(&scalar(&[2, 2], &[0.0; 4]))[(0, 0)], 0.0);
    }

    #[test]
    fn one_way_reduces() {
        let v = [1.0, -2.0, 0.5, 3.0];
        let s = scalar(&[4], &v);
        // K = 1: n = N, so (N/N²) Σ_i ψ_i².
        let direct = v.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!((psi_hat(&s)[(0, 0)] - direct).abs() < 1e-14);
        assert_eq!(cgm_psi(&s), psi_hat(&s));
    }

    #[test]
    fn intervals() {
        let ci = confidence_interval(&[1.0], &[1.0], 0.95).unwrap()[0];
        assert!((ci.upper - 1.0 - 1.959_964).abs() < 5e-7);
        let narrow = confidence_interval(&[1.0], &[1.0], 0.9).unwrap()[0];
        assert!(ci.lower < narrow.lower && narrow.upper < ci.upper);
        let point = confidence_interval(&[2.0], &[0.0], 0.95).unwrap()[0];
        assert_eq!((point.lower, point.upper), (2.0, 2.0));
        assert!(confidence_interval(&[0.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn shape_mismatch() {
        assert!(ScoreArray::new(Shape::new(vec![2, 2]).unwrap(), 1, vec![0.0; 3]).is_err());
        assert!(psi_hat_k(&scalar(&[2, 2], &[0.0; 4]), 2).is_err());
    }
}

use serde::Serialize;

use super::functional::Functional;
use super::projection::{projection_moments, ProjectionMode, Projector};
use crate::error::{Error, Result};
use crate::se_array::{ClusteredSample, DgpSpec, LatentTable, Mask, Shape};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoeffdingTerm {
    pub mask: Mask,
    /// |I_{N,e}|.
    pub size: usize,
    /// H_N^e f, one entry per coordinate of f.
    pub value: Vec<f64>,
}

/// H_N^e f for every nonzero mask, plus the two sides of the
/// reconstruction identity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoeffdingComponents {
    pub shape: Shape,
    pub terms: Vec<HoeffdingTerm>,
    /// Ē_N f.
    pub sample_mean: Vec<f64>,
    /// P f.
    pub population_mean: Vec<f64>,
}

impl HoeffdingComponents {
    pub fn term(&self, e: Mask) -> Option<&HoeffdingTerm> {
        self.terms.iter().find(|t| t.mask == e)
    }

    /// max_j |Σ_e H_N^e f_j − (Ē_N f_j − P f_j)|.
    pub fn reconstruction_residual(&self) -> f64 {
        (0..self.sample_mean.len())
            .map(|j| {
                let total: f64 = self.terms.iter().map(|t| t.value[j]).sum();
                (total - (self.sample_mean[j] - self.population_mean[j])).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn latent_for<'s>(spec: &DgpSpec, sample: &'s ClusteredSample) -> Result<&'s LatentTable> {
    let table = sample.latent().ok_or(Error::NoLatent)?;
    if table.layout() != spec.layout() || table.shape() != spec.shape() {
        return Err(Error::MissingLatent {
            mask: "*".into(),
            index: "latent table does not match the design".into(),
        });
    }
    Ok(table)
}

/// Tables of P_e f over I_{N,e} for the requested masks. The full mask reads
/// the observed records directly.
pub(crate) fn projection_tables(
    f: &dyn Functional,
    spec: &DgpSpec,
    sample: &ClusteredSample,
    masks: &[Mask],
    mode: ProjectionMode,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let table = latent_for(spec, sample)?;
    let projector = Projector::new(spec, mode);
    let full = Mask::full(spec.shape().order());
    let mut out = vec![Vec::new(); 1 << spec.shape().order()];
    for &e in masks {
        out[e.bits() as usize] = if e == full {
            sample
                .records()
                .map(|r| {
                    let mut v = vec![0.0; f.dim()];
                    f.eval(r, &mut v);
                    v
                })
                .collect()
        } else {
            projector.table(f, table, e)?
        };
    }
    Ok(out)
}

/// P f as the fully unconditional projection.
pub(crate) fn population_mean(f: &dyn Functional, spec: &DgpSpec, mode: ProjectionMode) -> Result<Vec<f64>> {
    let latent = crate::se_array::CellLatent::zeros(spec.layout());
    Projector::new(spec, mode).conditional(f, &latent, Mask::zero(spec.shape().order()), &[])
}

/// Averages of π_e f over I_{N,e} for the given masks, computed from
/// projection tables by Möbius inversion.
pub(crate) fn h_terms(
    shape: &Shape,
    tables: &[Vec<Vec<f64>>],
    mean: &[f64],
    masks: &[Mask],
) -> Vec<HoeffdingTerm> {
    let d = mean.len();
    masks
        .iter()
        .map(|&e| {
            let indices = shape.masked_indices(e);
            let mut acc = vec![0.0; d];
            for idx in &indices {
                for m in e.submasks() {
                    let sign = if (e.weight() - m.weight()) % 2 == 0 { 1.0 } else { -1.0 };
                    let p: &[f64] = if m.is_zero() {
                        mean
                    } else {
                        &tables[m.bits() as usize][shape.masked_linear_index(m, idx)]
                    };
                    for (a, v) in acc.iter_mut().zip(p) {
                        *a += sign * v;
                    }
                }
            }
            let size = indices.len();
            acc.iter_mut().for_each(|a| *a /= size as f64);
            HoeffdingTerm { mask: e, size, value: acc }
        })
        .collect()
}

/// The Hoeffding-type decomposition Ē_N f − P f = Σ_e H_N^e f.
pub fn hoeffding_decompose(
    f: &dyn Functional,
    spec: &DgpSpec,
    sample: &ClusteredSample,
    mode: ProjectionMode,
) -> Result<HoeffdingComponents> {
    let masks = Mask::all_nonzero(spec.shape().order());
    let tables = projection_tables(f, spec, sample, &masks, mode)?;
    let population_mean = population_mean(f, spec, mode)?;
    let terms = h_terms(spec.shape(), &tables, &population_mean, &masks);
    let mut sample_mean = vec![0.0; f.dim()];
    let mut buf = vec![0.0; f.dim()];
    for r in sample.records() {
        f.eval(r, &mut buf);
        for (s, b) in sample_mean.iter_mut().zip(&buf) {
            *s += b;
        }
    }
    sample_mean.iter_mut().for_each(|s| *s /= sample.len() as f64);
    Ok(HoeffdingComponents { shape: spec.shape().clone(), terms, sample_mean, population_mean })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HajekProjection {
    /// Σ_{c ≤ N_k} (√n/N_k)(E[f | U_{c e_k}] − P f) for each dimension k.
    pub per_dimension: Vec<f64>,
    /// H_n f, the sum of the per-dimension terms.
    pub total: f64,
    /// G_n f = √n (Ē_N f − P f).
    pub scaled_mean: f64,
    /// Var(E[f | U_{e_k}]) for each dimension k.
    pub dimension_variances: Vec<f64>,
}

impl HajekProjection {
    /// G_n f − H_n f.
    pub fn remainder(&self) -> f64 {
        self.scaled_mean - self.total
    }
}

/// The Hajek projection of G_n f onto sums of single-dimension factors.
pub fn hajek_projection(
    f: &dyn Functional,
    spec: &DgpSpec,
    sample: &ClusteredSample,
    mode: ProjectionMode,
) -> Result<HajekProjection> {
    if f.dim() != 1 {
        return Err(Error::Domain("the Hajek projection takes a scalar function".into()));
    }
    let shape = spec.shape();
    let order = shape.order();
    let units: Vec<Mask> = (0..order).map(|k| Mask::unit(order, k)).collect();
    let tables = projection_tables(f, spec, sample, &units, mode)?;
    let mean = population_mean(f, spec, mode)?[0];
    let root_n = (shape.min_dim() as f64).sqrt();
    let per_dimension: Vec<f64> = units
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let nk = shape.dim(k) as f64;
            tables[e.bits() as usize].iter().map(|p| p[0] - mean).sum::<f64>() * root_n / nk
        })
        .collect();
    let total = per_dimension.iter().sum();
    let scaled_mean = root_n * (sample.mean_of(|r| {
        let mut v = [0.0];
        f.eval(r, &mut v);
        v[0]
    }) - mean);
    let dimension_variances = units
        .iter()
        .map(|&e| projection_moments(f, spec, e, mode).map(|m| m.covariance()[(0, 0)]))
        .collect::<Result<_>>()?;
    Ok(HajekProjection { per_dimension, total, scaled_mean, dimension_variances })
}

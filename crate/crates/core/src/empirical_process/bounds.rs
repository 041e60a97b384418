use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::decomposition::{h_terms, population_mean, projection_tables};
use super::entropy::entropy_integral_vc;
use super::functional::{EnvelopeOf, FunctionGrid};
use super::projection::{masked_key, projection_moments, Population, ProjectionMode, Projector};
use crate::error::{Error, Result};
use crate::se_array::rng::{derive_seed, tag};
use crate::se_array::{simulate, CellLatent, DgpSpec, Mask, MultiIndex, Shape};

const CENTERING_TOL: f64 = 1e-12;
const SIGMA_FLOOR: f64 = 1e-300;

/// Monte Carlo estimate of |I_{N,e}|^{1/2} E‖H_N^e f‖_𝓕.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupEstimate {
    pub mean: f64,
    /// Monte Carlo standard error of `mean`.
    pub se: f64,
    pub replications: usize,
    /// Root mean square of M_e = max_t P_e F at the diagonal cells.
    pub diagonal_envelope_norm: f64,
}

/// Averages √|I_{N,e}| · max_f |H_N^e f| over `replications` simulated
/// samples. Replication r uses a seed derived from (`seed`, r).
pub fn empirical_sup_process(
    grid: &FunctionGrid,
    spec: &DgpSpec,
    e: Mask,
    replications: usize,
    seed: u64,
) -> Result<SupEstimate> {
    if replications < 2 {
        return Err(Error::Domain("at least two replications are needed for a standard error".into()));
    }
    if e.order() != spec.shape().order() || e.is_zero() {
        return Err(Error::InvalidMask(format!("mask {e} for shape {}", spec.shape())));
    }
    let mode = ProjectionMode::Exact;
    let centre = population_mean(grid, spec, mode)?;
    let worst = centre.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if worst > CENTERING_TOL {
        return Err(Error::UncenteredGrid(worst));
    }
    let shape = spec.shape();
    let masks: Vec<Mask> = e.submasks().into_iter().filter(|m| !m.is_zero()).collect();
    let root_size = (shape.masked_size(e) as f64).sqrt();
    let envelope = EnvelopeOf(grid);
    let projector = Projector::new(spec, mode);
    let n = shape.min_dim();

    let draws: Vec<(f64, f64)> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let sample = simulate(spec, derive_seed(seed, tag::REPLICATION, &[r]))?;
            let tables = projection_tables(grid, spec, &sample, &masks, mode)?;
            let term = h_terms(shape, &tables, &centre, &[e]).pop().expect("one mask");
            let sup = term.value.iter().fold(0.0f64, |m, v| m.max(v.abs())) * root_size;
            let table = sample.latent().ok_or(Error::NoLatent)?;
            let mut diag_max = 0.0f64;
            for t in 1..=n {
                let idx = MultiIndex::diagonal(shape.order(), t, e);
                let mut latent = CellLatent::zeros(spec.layout());
                table.fill_cell(&idx, e, &mut latent)?;
                let pf = projector.conditional(&envelope, &latent, e, &masked_key(&idx, e))?[0];
                diag_max = diag_max.max(pf);
            }
            Ok((sup, diag_max))
        })
        .collect::<Result<_>>()?;

    let reps = draws.len() as f64;
    let mean = draws.iter().map(|d| d.0).sum::<f64>() / reps;
    let var = draws.iter().map(|d| (d.0 - mean).powi(2)).sum::<f64>() / (reps - 1.0);
    let m2 = draws.iter().map(|d| d.1 * d.1).sum::<f64>() / reps;
    Ok(SupEstimate {
        mean,
        se: (var / reps).sqrt(),
        replications: draws.len(),
        diagonal_envelope_norm: m2.sqrt(),
    })
}

/// The two VC thresholds on A appearing in the literature for order-K
/// arrays, and the weaker one used for validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VcThreshold {
    /// e^{2(K−1)/16} ∨ e.
    pub exponent_over_16: f64,
    /// (e^{2(K−1)}/16) ∨ e.
    pub value_over_16: f64,
    pub used: f64,
}

impl VcThreshold {
    pub fn for_order(order: usize) -> Self {
        let e = std::f64::consts::E;
        let x = 2.0 * (order as f64 - 1.0);
        let exponent_over_16 = (x / 16.0).exp().max(e);
        let value_over_16 = (x.exp() / 16.0).max(e);
        Self { exponent_over_16, value_over_16, used: exponent_over_16.min(value_over_16) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub mask: Mask,
    pub n: usize,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs_global: f64,
    pub rhs_local: f64,
    /// lhs / rhs_global.
    pub ratio: f64,
    /// lhs / rhs_local.
    pub ratio_local: f64,
    /// sup_f ‖P_e f‖_{P,2}, clipped to [tiny, ‖P_e F‖_{P,2}].
    pub sigma: f64,
    /// ‖M_e‖_{P,2}.
    pub diagonal_envelope_norm: f64,
}

/// Spread and trend of one LHS/RHS ratio across the n-grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioTrend {
    pub max_ratio: f64,
    pub median_ratio: f64,
    /// Slope of log ratio on log n and its standard error from the Monte
    /// Carlo errors of the left side.
    pub slope: f64,
    pub slope_se: f64,
    /// max/median ≤ 2.
    pub bounded: bool,
    /// slope ≤ 2·slope_se.
    pub non_increasing: bool,
}

impl RatioTrend {
    fn flat(ratios: &[f64]) -> Self {
        Self {
            max_ratio: ratios.iter().copied().fold(0.0, f64::max),
            median_ratio: median(ratios),
            slope: 0.0,
            slope_se: 0.0,
            bounded: true,
            non_increasing: true,
        }
    }

    fn fit(log_n: &[f64], ratios: &[f64], rel_var: &[f64]) -> Self {
        let log_ratio: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
        let (slope, slope_se) = fit_slope(log_n, &log_ratio, rel_var);
        let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
        let median_ratio = median(ratios);
        Self {
            max_ratio,
            median_ratio,
            slope,
            slope_se,
            bounded: max_ratio <= 2.0 * median_ratio,
            non_increasing: slope <= 2.0 * slope_se,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaskSummary {
    pub mask: Mask,
    /// Against J_e(1)‖F‖_{P,q∨2}.
    pub global: RatioTrend,
    /// Against σ L^{k/2} + ‖M_e‖ L^k/√n.
    pub local: RatioTrend,
    /// Least-squares slope of log lhs on log n.
    pub lhs_slope: f64,
    /// Slope of log(lhs/√|I|) on log n, i.e. of E‖H_N^e‖ itself.
    pub raw_slope: f64,
    /// Slope of log((v log(A∨N̄))^{k/2}/√|I|) on log n.
    pub envelope_slope: f64,
    /// Every left side is at most 1e−8.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub summaries: Vec<MaskSummary>,
    pub threshold: VcThreshold,
    pub moment_order: f64,
}

impl BoundReport {
    pub fn summary(&self, e: Mask) -> Option<&MaskSummary> {
        self.summaries.iter().find(|s| s.mask == e)
    }

    /// CSV with columns mask, n, lhs, lhs_se, rhs_global, rhs_local, ratio.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["mask", "n", "lhs", "lhs_se", "rhs_global", "rhs_local", "ratio"])?;
        for r in &self.rows {
            wtr.write_record([
                r.mask.to_string(),
                r.n.to_string(),
                r.lhs.to_string(),
                r.lhs_se.to_string(),
                r.rhs_global.to_string(),
                r.rhs_local.to_string(),
                r.ratio.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Weighted least-squares slope of y on x and its standard error.
fn fit_slope(x: &[f64], y: &[f64], var: &[f64]) -> (f64, f64) {
    let w: Vec<f64> = var.iter().map(|v| if *v > 0.0 { 1.0 / v } else { 1.0 }).collect();
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(&w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    let se = if var.iter().all(|v| *v > 0.0) { (1.0 / sxx).sqrt() } else { 0.0 };
    (slope, se)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

/// Simulated left sides against the global and local VC-type right sides
/// over square shapes n × … × n.
pub fn bound_check(
    grid: &FunctionGrid,
    spec: &DgpSpec,
    masks: &[Mask],
    n_grid: &[usize],
    moment_order: f64,
    replications: usize,
    seed: u64,
) -> Result<BoundReport> {
    let vc = grid
        .vc()
        .ok_or_else(|| Error::Domain("the VC-form check needs declared (A, v)".into()))?;
    let order = spec.shape().order();
    let threshold = VcThreshold::for_order(order);
    if vc.a < threshold.used {
        return Err(Error::Domain(format!("A = {} is below the VC threshold {}", vc.a, threshold.used)));
    }
    if n_grid.len() < 2 || n_grid.iter().any(|&n| n == 0) {
        return Err(Error::Domain("the n-grid needs at least two positive sizes".into()));
    }
    if !(moment_order >= 1.0) {
        return Err(Error::Domain(format!("moment order {moment_order} < 1")));
    }
    let grid = grid.centered(spec)?;
    let pop = Population::exact(spec)?;
    let q = moment_order.max(2.0);
    let envelope_norm = pop.expect_fn(|r| grid.envelope(r).abs().powf(q)).powf(1.0 / q);
    let envelope = EnvelopeOf(&grid);

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (mi, &e) in masks.iter().enumerate() {
        if e.order() != order || e.is_zero() {
            return Err(Error::InvalidMask(format!("mask {e} for order {order}")));
        }
        let k = e.weight();
        let norms = projection_moments(&grid, spec, e, ProjectionMode::Exact)?.l2_norms();
        let env_proj = projection_moments(&envelope, spec, e, ProjectionMode::Exact)?.l2_norms()[0];
        let sigma = norms.iter().fold(0.0f64, |m, v| m.max(*v)).clamp(SIGMA_FLOOR, env_proj.max(SIGMA_FLOOR));
        let j1 = entropy_integral_vc(vc.a, vc.v, k, 1.0)?;
        let rhs_global = j1 * envelope_norm;

        let mut mask_rows = Vec::new();
        for (ni, &n) in n_grid.iter().enumerate() {
            let spec_n = spec.with_shape(Shape::square(order, n)?)?;
            let est = empirical_sup_process(
                &grid,
                &spec_n,
                e,
                replications,
                derive_seed(seed, tag::REPLICATION, &[mi as u64, ni as u64]),
            )?;
            let log_term = vc.v * vc.a.max(n as f64).ln();
            let rhs_local = sigma * log_term.powf(k as f64 / 2.0)
                + est.diagonal_envelope_norm * log_term.powi(k as i32) / (n as f64).sqrt();
            mask_rows.push(BoundRow {
                mask: e,
                n,
                lhs: est.mean,
                lhs_se: est.se,
                rhs_global,
                rhs_local,
                ratio: est.mean / rhs_global,
                ratio_local: est.mean / rhs_local,
                sigma,
                diagonal_envelope_norm: est.diagonal_envelope_norm,
            });
        }

        let log_n: Vec<f64> = mask_rows.iter().map(|r| (r.n as f64).ln()).collect();
        let global: Vec<f64> = mask_rows.iter().map(|r| r.ratio).collect();
        let local: Vec<f64> = mask_rows.iter().map(|r| r.ratio_local).collect();
        let degenerate = mask_rows.iter().all(|r| r.lhs <= 1e-8);
        let summary = if degenerate {
            MaskSummary {
                mask: e,
                global: RatioTrend::flat(&global),
                local: RatioTrend::flat(&local),
                lhs_slope: 0.0,
                raw_slope: 0.0,
                envelope_slope: 0.0,
                degenerate,
            }
        } else {
            let rel_var: Vec<f64> = mask_rows.iter().map(|r| (r.lhs_se / r.lhs).powi(2)).collect();
            let log_lhs: Vec<f64> = mask_rows.iter().map(|r| r.lhs.ln()).collect();
            let root_size = |n: usize| (Shape::square(order, n).map(|s| s.masked_size(e)).unwrap_or(1) as f64).sqrt();
            let log_raw: Vec<f64> = mask_rows.iter().map(|r| (r.lhs / root_size(r.n)).ln()).collect();
            let log_env: Vec<f64> = mask_rows
                .iter()
                .map(|r| {
                    let l = vc.v * vc.a.max(r.n as f64).ln();
                    (l.powf(k as f64 / 2.0) / root_size(r.n)).ln()
                })
                .collect();
            let (lhs_slope, _) = fit_slope(&log_n, &log_lhs, &rel_var);
            let (raw_slope, _) = fit_slope(&log_n, &log_raw, &rel_var);
            let (envelope_slope, _) = fit_slope(&log_n, &log_env, &vec![1.0; log_n.len()]);
            MaskSummary {
                mask: e,
                global: RatioTrend::fit(&log_n, &global, &rel_var),
                local: RatioTrend::fit(&log_n, &local, &rel_var),
                lhs_slope,
                raw_slope,
                envelope_slope,
                degenerate,
            }
        };
        rows.extend(mask_rows);
        summaries.push(summary);
    }
    Ok(BoundReport { rows, summaries, threshold, moment_order })
}

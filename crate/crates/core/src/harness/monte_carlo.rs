use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::config::McConfig;
use super::estimate::{build_model, estimate_sample, oracle_for, oracle_nuisance, oracle_v_for};
use crate::error::{Error, Result};
use crate::models::{MomentModel, Nuisance, OracleVariance};
use crate::se_array::rng::{derive_seed, tag};
use crate::se_array::{simulate, Shape};

/// Why a replication is left out of the summary statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    NonConvergence,
    Boundary,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub shape_id: usize,
    pub rep: usize,
    pub seed: u64,
    pub theta_hat: Vec<f64>,
    pub se: Vec<f64>,
    /// Every coordinate's interval covers θ₀.
    pub covered: bool,
    pub outcome: Outcome,
    pub rank_deficient: bool,
    /// V̂ row-major.
    pub v_hat: Vec<f64>,
    pub error: Option<String>,
}

impl ReplicationRecord {
    fn flags(&self) -> String {
        let mut f = vec![match self.outcome {
            Outcome::Ok => "ok",
            Outcome::NonConvergence => "nonconverged",
            Outcome::Boundary => "boundary",
            Outcome::Failed => "failed",
        }];
        if self.rank_deficient {
            f.push("rank_deficient");
        }
        f.join("|")
    }
}

/// Seed of replication `rep` at shape `shape_id`.
pub fn replication_seed(base: u64, shape_id: usize, rep: usize) -> u64 {
    derive_seed(base, tag::REPLICATION, &[shape_id as u64, rep as u64])
}

/// Per-run context shared by every replication.
pub struct McContext {
    model: std::sync::Arc<dyn MomentModel>,
    oracle_eta: Option<Nuisance>,
    theta0: Vec<f64>,
    shapes: Vec<Shape>,
}

impl McContext {
    pub fn new(config: &McConfig) -> Result<Self> {
        config.validate()?;
        let model = build_model(config)?;
        let theta0 = config
            .dgp
            .design
            .theta0()
            .ok_or_else(|| Error::Config("the design has no true parameter to compare against".into()))?;
        if theta0.len() != model.param_dim() {
            return Err(Error::Config("θ₀ does not match the model's parameter dimension".into()));
        }
        let oracle_eta = oracle_nuisance(&config.dgp.design, model.as_ref());
        Ok(Self { model, oracle_eta, theta0, shapes: config.shape_list()? })
    }
}

/// Generate, fit, solve, estimate the variance and check coverage. Errors
/// are recorded in the returned record.
pub fn run_replication(config: &McConfig, ctx: &McContext, shape_id: usize, rep: usize) -> ReplicationRecord {
    let seed = replication_seed(config.seed, shape_id, rep);
    let d = ctx.theta0.len();
    let mut record = ReplicationRecord {
        shape_id,
        rep,
        seed,
        theta_hat: vec![f64::NAN; d],
        se: vec![f64::NAN; d],
        covered: false,
        outcome: Outcome::Failed,
        rank_deficient: false,
        v_hat: vec![f64::NAN; d * d],
        error: None,
    };
    let result = config
        .dgp
        .spec(ctx.shapes[shape_id].clone())
        .and_then(|spec| simulate(&spec, seed))
        .and_then(|sample| estimate_sample(config, ctx.model.as_ref(), &sample.without_latent(), ctx.oracle_eta.as_ref()));
    match result {
        Ok(report) => {
            record.covered = report.intervals.iter().zip(&ctx.theta0).all(|(ci, t)| ci.contains(*t));
            record.theta_hat = report.fit.theta.clone();
            record.se = report.variance.std_errors.clone();
            record.v_hat = report.variance.v_hat.transpose().iter().copied().collect();
            record.rank_deficient = report.fit.rank_deficient;
            record.outcome = if report.fit.boundary {
                Outcome::Boundary
            } else if !report.fit.converged || report.learners.iter().any(|l| !l.converged) {
                Outcome::NonConvergence
            } else {
                Outcome::Ok
            };
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSummary {
    pub shape_id: usize,
    pub shape: Vec<usize>,
    pub n: usize,
    pub replications: usize,
    pub used: usize,
    pub discarded_nonconvergence: usize,
    pub discarded_boundary: usize,
    pub failed: usize,
    pub rank_deficient: usize,
    pub theta0: Vec<f64>,
    pub mean_bias: Vec<f64>,
    pub rmse: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub sd_theta: Vec<f64>,
    pub coverage: f64,
    /// √(p(1−p)/R) over the replications used.
    pub coverage_se: f64,
    /// Kolmogorov–Smirnov distance of the standardized first coordinate to
    /// N(0, 1).
    pub ks_distance: f64,
    /// `oracle` when standardized by √(V/n), `estimated` when by se.
    pub normality_standardization: String,
    pub degenerate: Option<bool>,
    pub oracle_v: Option<Vec<f64>>,
    pub mean_v_hat: Vec<f64>,
    /// ‖mean V̂ − V‖_F / ‖V‖_F.
    pub rel_v_error_of_mean: Option<f64>,
    /// Mean over replications of ‖V̂ − V‖_F / ‖V‖_F.
    pub mean_rel_v_error: Option<f64>,
    /// min_k N_k / max_k N_k < 0.2.
    pub unbalanced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub model: String,
    pub learner: String,
    pub variance: String,
    pub level: f64,
    pub seed: u64,
    pub initial_estimator: String,
    pub shapes: Vec<ShapeSummary>,
}

pub struct McRun {
    pub records: Vec<ReplicationRecord>,
    pub summary: McSummary,
}

/// Every replication of every shape on a pool of `threads` workers (all
/// cores when `None`). Results do not depend on the thread count.
pub fn run_monte_carlo(config: &McConfig, threads: Option<usize>) -> Result<McRun> {
    let ctx = McContext::new(config)?;
    let oracle = match &ctx.oracle_eta {
        Some(eta) => oracle_for(config, ctx.model.as_ref(), &ctx.shapes[0], eta)?,
        None => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    let jobs: Vec<(usize, usize)> =
        (0..ctx.shapes.len()).flat_map(|s| (0..config.replications).map(move |r| (s, r))).collect();
    let records: Vec<ReplicationRecord> =
        pool.install(|| jobs.par_iter().map(|&(s, r)| run_replication(config, &ctx, s, r)).collect());
    let shapes = ctx
        .shapes
        .iter()
        .enumerate()
        .map(|(id, shape)| {
            let recs: Vec<&ReplicationRecord> = records.iter().filter(|r| r.shape_id == id).collect();
            summarize(id, shape, &recs, &ctx.theta0, oracle.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = McSummary {
        model: ctx.model.name().to_string(),
        learner: serde_json::to_value(&config.learner)?["name"].as_str().unwrap_or("unknown").to_string(),
        variance: serde_json::to_value(config.variance)?.as_str().unwrap_or("psihat").to_string(),
        level: config.level,
        seed: config.seed,
        initial_estimator: match (&config.estimation.weighting.mode, &config.estimation.weighting.initial) {
            (crate::gmm::WeightingMode::Identity, _) => "none",
            (_, Some(_)) => "configured",
            (_, None) => "identity-weighted first step",
        }
        .to_string(),
        shapes,
    };
    Ok(McRun { records, summary })
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn ks_distance(mut z: Vec<f64>) -> f64 {
    if z.is_empty() {
        return f64::NAN;
    }
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let m = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal.cdf(x);
            (c - i as f64 / m).abs().max(((i + 1) as f64 / m - c).abs())
        })
        .fold(0.0, f64::max)
}

fn summarize(
    shape_id: usize,
    shape: &Shape,
    records: &[&ReplicationRecord],
    theta0: &[f64],
    oracle: Option<&OracleVariance>,
) -> Result<ShapeSummary> {
    let d = theta0.len();
    let count = |o: Outcome| records.iter().filter(|r| r.outcome == o).count();
    let used: Vec<&ReplicationRecord> = records.iter().copied().filter(|r| r.outcome == Outcome::Ok).collect();
    let m = used.len() as f64;
    let mean_of = |f: &dyn Fn(&ReplicationRecord) -> f64| used.iter().map(|r| f(r)).sum::<f64>() / m;
    let mean_bias: Vec<f64> = (0..d).map(|j| mean_of(&|r| r.theta_hat[j] - theta0[j])).collect();
    let rmse = (0..d).map(|j| mean_of(&|r| (r.theta_hat[j] - theta0[j]).powi(2)).sqrt()).collect();
    let mean_se = (0..d).map(|j| mean_of(&|r| r.se[j])).collect();
    let sd_theta = (0..d)
        .map(|j| {
            let mean = mean_of(&|r| r.theta_hat[j]);
            (used.iter().map(|r| (r.theta_hat[j] - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0)).sqrt()
        })
        .collect();
    let coverage = mean_of(&|r| if r.covered { 1.0 } else { 0.0 });
    let mean_v_hat: Vec<f64> = (0..d * d).map(|j| mean_of(&|r| r.v_hat[j])).collect();

    let oracle_here = oracle.map(|o| o.for_shape(shape)).transpose()?;
    let v: Option<DMatrix<f64>> = oracle_v_for(oracle, shape)?;
    let v_flat: Option<Vec<f64>> = v.as_ref().map(|v| v.transpose().iter().copied().collect());
    let v_norm = v_flat.as_deref().map(frobenius).filter(|x| *x > 0.0);
    let rel = |vh: &[f64]| -> Option<f64> {
        let (vf, norm) = (v_flat.as_ref()?, v_norm?);
        Some(frobenius(&vh.iter().zip(vf).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm)
    };
    let mean_rel_v_error = v_norm.map(|_| mean_of(&|r| rel(&r.v_hat).unwrap_or(f64::NAN)));
    let n = shape.min_dim() as f64;
    let (z, standardization): (Vec<f64>, &str) = match &v {
        Some(v) if v[(0, 0)] > 0.0 => {
            let scale = (v[(0, 0)] / n).sqrt();
            (used.iter().map(|r| (r.theta_hat[0] - theta0[0]) / scale).collect(), "oracle")
        }
        _ => (used.iter().filter(|r| r.se[0] > 0.0).map(|r| (r.theta_hat[0] - theta0[0]) / r.se[0]).collect(), "estimated"),
    };
    Ok(ShapeSummary {
        shape_id,
        shape: shape.dims().to_vec(),
        n: shape.min_dim(),
        replications: records.len(),
        used: used.len(),
        discarded_nonconvergence: count(Outcome::NonConvergence),
        discarded_boundary: count(Outcome::Boundary),
        failed: count(Outcome::Failed),
        rank_deficient: records.iter().filter(|r| r.rank_deficient).count(),
        theta0: theta0.to_vec(),
        mean_bias,
        rmse,
        mean_se,
        sd_theta,
        coverage,
        coverage_se: (coverage * (1.0 - coverage) / m).sqrt(),
        ks_distance: ks_distance(z),
        normality_standardization: standardization.to_string(),
        degenerate: oracle_here.as_ref().map(|o| o.degenerate),
        rel_v_error_of_mean: rel(&mean_v_hat),
        mean_rel_v_error,
        oracle_v: v_flat,
        mean_v_hat,
        unbalanced: (shape.min_dim() as f64) < 0.2 * shape.max_dim() as f64,
    })
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// Per-replication CSV: shape_id, rep, theta_hat_j..., se_j..., covered,
/// flags.
pub fn write_replications_csv<W: Write>(records: &[ReplicationRecord], dim: usize, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["shape_id".to_string(), "rep".to_string()];
    header.extend((1..=dim).map(|j| format!("theta_hat_{j}")));
    header.extend((1..=dim).map(|j| format!("se_{j}")));
    header.extend(["covered".to_string(), "flags".to_string()]);
    wtr.write_record(&header)?;
    for r in records {
        let mut row = vec![r.shape_id.to_string(), r.rep.to_string()];
        row.extend(r.theta_hat.iter().copied().map(fmt));
        row.extend(r.se.iter().copied().map(fmt));
        row.push(u8::from(r.covered).to_string());
        row.push(r.flags());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes the replication CSV and summary JSON under `dir`, returning both
/// paths.
pub fn emit_reports(run: &McRun, config: &McConfig, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(&config.output.replications);
    let json_path = dir.join(&config.output.summary);
    let dim = config.dgp.design.theta0().map_or(1, |t| t.len());
    write_replications_csv(&run.records, dim, std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
    let mut json = serde_json::to_string_pretty(&run.summary)?;
    json.push('\n');
    std::fs::write(&json_path, json)?;
    Ok((csv_path, json_path))
}

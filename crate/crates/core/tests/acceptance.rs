//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! a tally. A failing criterion is reported, not turned into a test failure;
//! only a criterion that cannot run at all fails the target.

use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mwdml::empirical_process::{
    bound_check, hoeffding_decompose, pi_projection, FunctionGrid, Functional, Population, ProjectionMode, ScalarFn,
};
use mwdml::gmm::{solve_gmm, GmmSpec, WeightingSpec};
use mwdml::harness::{run_monte_carlo, DgpConfig, McConfig, OracleConfig, OutputPaths};
use mwdml::learners::{rho_rate, vc_characteristics, ComplexityCase, LearnerConfig, RateInputs};
use mwdml::models::{
    non_orthogonal_oracle_nuisance, orthogonality_check, plr_oracle_nuisance, random_linear_directions, IvModel,
    LocationModel, ModelConfig, NonOrthogonalPlrModel, Nuisance, PlrModel, StepGrid,
};
use mwdml::partition::{build_transversal_partition, verify_partition};
use mwdml::se_array::{
    simulate, AdditiveDesign, Design, IvDesign, LatentDist, LocationDesign, PlrDesign, ProductDesign,
};
use mwdml::variance::{cgm_psi, psi_hat, psi_hat_k, psi_tilde_e, ScoreArray, VarianceMode};
use mwdml::{DgpSpec, Mask, MultiIndex, Shape};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn battery() -> Vec<(&'static str, Box<dyn Functional>)> {
    vec![
        ("x", Box::new(ScalarFn(|r: &[f64]| r[0]))),
        ("x^2", Box::new(ScalarFn(|r: &[f64]| r[0] * r[0]))),
        ("1{x<=0.5}", Box::new(ScalarFn(|r: &[f64]| f64::from(u8::from(r[0] <= 0.5))))),
        ("exp(x/2)", Box::new(ScalarFn(|r: &[f64]| (r[0] / 2.0).exp()))),
        ("cos(x)", Box::new(ScalarFn(|r: &[f64]| r[0].cos()))),
    ]
}

fn finite_designs() -> Vec<DgpSpec> {
    let atoms = LatentDist::finite(vec![-1.0, 0.0, 2.0], vec![0.5, 0.3, 0.2]).unwrap();
    vec![
        AdditiveDesign::new(2, atoms.clone()).spec(Shape::square(2, 4).unwrap()).unwrap(),
        AdditiveDesign::new(3, atoms).spec(Shape::square(3, 3).unwrap()).unwrap(),
    ]
}

fn hoeffding_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for spec in finite_designs() {
        for seed in 0..20 {
            let s = simulate(&spec, seed).unwrap();
            for (_, f) in battery() {
                let h = hoeffding_decompose(f.as_ref(), &spec, &s, ProjectionMode::Exact).map_err(|e| e.to_string())?;
                worst = worst.max(h.reconstruction_residual());
            }
        }
    }
    check(worst <= 1e-10, format!("max residual {worst:.3e} over 2 designs x 5 functions x 20 seeds"))
}

fn pi_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for spec in finite_designs() {
        let shape = spec.shape().clone();
        let order = shape.order();
        let cells = [MultiIndex::new(vec![1; order]), MultiIndex::new(shape.dims().to_vec())];
        for seed in 0..20 {
            let s = simulate(&spec, seed).unwrap();
            for (_, f) in battery() {
                for e in Mask::all_nonzero(order) {
                    for cell in &cells {
                        let p = pi_projection(f.as_ref(), &spec, &s, cell, e, ProjectionMode::Exact)
                            .map_err(|e| e.to_string())?;
                        worst = worst.max(p.discrepancy());
                    }
                }
            }
        }
    }
    check(worst <= 1e-12, format!("max |recursive - Mobius| {worst:.3e}"))
}

fn transversal_partitions() -> Outcome {
    let mut checked = 0;
    for order in 1..=3u32 {
        for code in 0..6usize.pow(order) {
            let dims: Vec<usize> = (0..order).map(|k| code / 6usize.pow(k) % 6 + 1).collect();
            let shape = Shape::new(dims).unwrap();
            for e in Mask::all_nonzero(order as usize) {
                let p = build_transversal_partition(&shape, e).map_err(|e| e.to_string())?;
                if !verify_partition(&p).all_ok() {
                    return Err(format!("partition of {shape} for mask {e} fails verification"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (shape, mask) pairs verified"))
}

fn brute_pairs(scores: &ScoreArray, matches: impl Fn(&MultiIndex, &MultiIndex) -> bool) -> DMatrix<f64> {
    let shape = scores.shape();
    let q = scores.dim();
    let mut out = DMatrix::zeros(q, q);
    for a in 0..shape.cell_count() {
        for b in 0..shape.cell_count() {
            if matches(&shape.cell_at(a), &shape.cell_at(b)) {
                let (x, y) = (scores.row(a), scores.row(b));
                for i in 0..q {
                    for j in 0..q {
                        out[(i, j)] += x[i] * y[j];
                    }
                }
            }
        }
    }
    let n = shape.cell_count() as f64;
    out * (shape.min_dim() as f64 / (n * n))
}

fn variance_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut min_eig) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let order = rng.random_range(1..=3);
        let dims: Vec<usize> = (0..order).map(|_| rng.random_range(1..=5)).collect();
        let shape = Shape::new(dims).unwrap();
        let q = rng.random_range(1..=3);
        let values = (0..shape.cell_count() * q).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s = ScoreArray::new(shape.clone(), q, values).unwrap();
        let mut cgm = DMatrix::zeros(q, q);
        for e in Mask::all_nonzero(order) {
            let brute = brute_pairs(&s, |a, b| e.support().iter().all(|&k| a.coords()[k] == b.coords()[k]));
            worst = worst.max((psi_tilde_e(&s, e).unwrap() - &brute).amax());
            cgm += if e.weight() % 2 == 1 { brute } else { -brute };
        }
        worst = worst.max((cgm_psi(&s) - cgm).amax());
        let mut total = DMatrix::zeros(q, q);
        for k in 0..order {
            let brute = brute_pairs(&s, |a, b| a.coords()[k] == b.coords()[k]);
            let agg = psi_hat_k(&s, k).unwrap();
            worst = worst.max((&agg - &brute).amax());
            min_eig = min_eig.min(agg.symmetric_eigenvalues().min());
            total += brute;
        }
        worst = worst.max((psi_hat(&s) - total).amax());
    }
    check(
        worst <= 1e-10 && min_eig >= -1e-10,
        format!("max |aggregated - brute force| {worst:.3e}, min eigenvalue {min_eig:.3e}"),
    )
}

fn gmm_oracles() -> Outcome {
    let loc = LocationDesign { order: 2, theta0: 1.5, factor: LatentDist::Rademacher, level_scales: vec![] };
    let s = simulate(&loc.spec(Shape::square(2, 7).unwrap()).unwrap(), 2).unwrap();
    let eta = Nuisance::new();
    let fit = solve_gmm(&LocationModel::new(0), &s, &eta, &GmmSpec::new(vec![0.0])).map_err(|e| e.to_string())?;
    let mean = s.mean_of(|r| r[0]);
    let loc_err = (fit.theta[0] - mean).abs();

    let iv = IvDesign::default().spec(Shape::new(vec![6, 9]).unwrap()).unwrap();
    let s = simulate(&iv, 5).unwrap();
    let model = IvModel::new(0, 1, vec![2]).unwrap();
    let fit = solve_gmm(&model, &s, &eta, &GmmSpec::new(vec![0.0])).map_err(|e| e.to_string())?;
    let ratio = s.mean_of(|r| r[2] * r[0]) / s.mean_of(|r| r[2] * r[1]);
    let iv_err = (fit.theta[0] - ratio).abs();

    let identity = GmmSpec::new(vec![0.0]).with_weighting(WeightingSpec::identity());
    let a = solve_gmm(&model, &s, &eta, &identity).map_err(|e| e.to_string())?;
    let invariance = (a.theta[0] - fit.theta[0]).abs();
    check(
        loc_err <= 4.0 * f64::EPSILON * mean.abs().max(1.0) && iv_err <= 1e-10 && invariance <= 1e-8,
        format!("location {loc_err:.1e}, IV ratio {iv_err:.1e}, weighting invariance {invariance:.1e}"),
    )
}

fn orthogonality() -> Outcome {
    let design = PlrDesign::default();
    let spec = design.spec(Shape::square(2, 6).unwrap()).unwrap();
    let pop = Population::exact(&spec).map_err(|e| e.to_string())?;
    let p = design.covariate_count();
    let x: Vec<usize> = (2..2 + p).collect();
    let plr = PlrModel::new(0, 1, x.clone());
    let dirs = random_linear_directions(PlrModel::NUISANCES, p, 10, 11);
    let orth = orthogonality_check(&plr, &pop, &[design.theta0], &plr_oracle_nuisance(&design), &dirs, StepGrid::default())
        .map_err(|e| e.to_string())?;
    let control = NonOrthogonalPlrModel::new(0, 1, x);
    let dirs = random_linear_directions(NonOrthogonalPlrModel::NUISANCES, p, 10, 11);
    let ctrl = orthogonality_check(
        &control,
        &pop,
        &[design.theta0],
        &non_orthogonal_oracle_nuisance(&design),
        &dirs,
        StepGrid::default(),
    )
    .map_err(|e| e.to_string())?;
    let ctrl_min = ctrl.per_direction.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        orth.max_abs <= 1e-6 && ctrl.max_abs >= 1e-2,
        format!(
            "orthogonal max {:.2e}; control max {:.2e} (smallest direction {ctrl_min:.2e})",
            orth.max_abs, ctrl.max_abs
        ),
    )
}

fn plr_config(shapes: Vec<Vec<usize>>, replications: usize, seed: u64) -> McConfig {
    McConfig {
        dgp: DgpConfig::new(Design::Plr(PlrDesign::default())),
        model: ModelConfig::plr(),
        learner: LearnerConfig::Oracle,
        estimation: GmmSpec::new(vec![0.0]),
        variance: VarianceMode::Psihat,
        shapes,
        replications,
        seed,
        level: 0.95,
        output: OutputPaths::default(),
        oracle: OracleConfig::Exact,
        bounds: None,
    }
}

fn coverage() -> Outcome {
    let oracle = run_monte_carlo(&plr_config(vec![vec![50, 50]], 1000, 2024), None).map_err(|e| e.to_string())?;
    let mut cfg = plr_config(vec![vec![50, 50]], 1000, 2025);
    cfg.learner = LearnerConfig::lasso();
    let lasso = run_monte_carlo(&cfg, None).map_err(|e| e.to_string())?;
    let (a, b) = (&oracle.summary.shapes[0], &lasso.summary.shapes[0]);
    check(
        (0.92..=0.98).contains(&a.coverage) && (0.90..=0.99).contains(&b.coverage),
        format!(
            "oracle coverage {:.3} ({} used), lasso coverage {:.3} ({} used)",
            a.coverage, a.used, b.coverage, b.used
        ),
    )
}

fn variance_consistency() -> Outcome {
    let cfg = plr_config(vec![vec![20, 20], vec![40, 40], vec![80, 80]], 500, 77);
    let run = run_monte_carlo(&cfg, None).map_err(|e| e.to_string())?;
    let errs: Vec<f64> = run.summary.shapes.iter().map(|s| s.mean_rel_v_error.unwrap_or(f64::NAN)).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    check(
        decreasing && errs[2] <= 0.2,
        format!("mean |V_hat - V|/|V| across (20,40,80): {:.4}, {:.4}, {:.4}", errs[0], errs[1], errs[2]),
    )
}

fn conservative_under_degeneracy() -> Outcome {
    let mut cfg = plr_config(vec![vec![50, 50]], 1000, 31);
    cfg.dgp.iid_degenerate = true;
    let run = run_monte_carlo(&cfg, None).map_err(|e| e.to_string())?;
    let s = &run.summary.shapes[0];
    check(
        s.coverage >= 0.94,
        format!("coverage {:.3} at nominal 0.95, oracle degenerate = {:?}", s.coverage, s.degenerate),
    )
}

fn maximal_inequality() -> Outcome {
    let n_grid = [10, 20, 40, 80];
    let additive = AdditiveDesign::new(2, LatentDist::Rademacher).spec(Shape::square(2, 4).unwrap()).unwrap();
    let grid = FunctionGrid::thresholds(0, &[-2.0, 0.0, 2.0]).map_err(|e| e.to_string())?;
    let masks = [Mask::unit(2, 0), Mask::unit(2, 1), Mask::full(2)];
    let report = bound_check(&grid, &additive, &masks, &n_grid, 2.0, 300, 10).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    for s in &report.summaries {
        let t = &s.global;
        let spread = t.max_ratio / t.median_ratio;
        ok &= t.bounded && t.non_increasing;
        lines.push(format!(
            "{}: max/median {spread:.2}, slope {:.3}±{:.3}",
            s.mask, t.slope, t.slope_se
        ));
    }
    let product = ProductDesign::new(2, LatentDist::Rademacher).spec(Shape::square(2, 4).unwrap()).unwrap();
    let grid = FunctionGrid::thresholds(0, &[0.0]).map_err(|e| e.to_string())?;
    let degenerate =
        bound_check(&grid, &product, &masks[..2], &n_grid, 2.0, 300, 11).map_err(|e| e.to_string())?;
    let max_lhs = degenerate.rows.iter().map(|r| r.lhs).fold(0.0, f64::max);
    ok &= max_lhs <= 1e-8;
    lines.push(format!("degenerate max LHS {max_lhs:.1e}"));
    check(ok, lines.join("; "))
}

fn rate_formulas() -> Outcome {
    let e = std::f64::consts::E;
    let mut worst: f64 = 0.0;
    let glm = vc_characteristics(&ComplexityCase::Glm { s: 3.0, p: 100.0, c: 1.0 }, 2).map_err(|e| e.to_string())?;
    worst = worst.max((glm.a - e * 100.0 / 3.0).abs());
    worst = worst.max((glm.v - 3.0).abs());
    let tree = vc_characteristics(&ComplexityCase::Tree { leaves: 1.0, p: 1.0, c: 1.0 }, 2).map_err(|e| e.to_string())?;
    worst = worst.max((tree.v - 2.0 * 2f64.ln()).abs()).max((tree.a - e).abs());
    let dnn = vc_characteristics(&ComplexityCase::Dnn { layers: 3.0, weights: 10.0, p: 4.0, units: 5.0, c: 1.0 }, 2)
        .map_err(|e| e.to_string())?;
    worst = worst.max((dnn.v - 60.0 * 20f64.ln()).abs());
    let inputs = RateInputs { v: 2.0, a: e, max_dim: 100.0, n: 400.0, envelope_norm: 1.0, q: 4.0, k: 1, order: 2 };
    let r = rho_rate(&inputs).map_err(|e| e.to_string())?;
    let lv = 2.0 * 100f64.ln();
    let branch1 = (lv / 400.0).sqrt();
    let branch2 = lv / 400f64.powf(0.25);
    worst = worst.max((r.branch1 - branch1).abs()).max((r.branch2 - branch2).abs());
    let rhos: Vec<f64> = [100.0, 200.0, 400.0, 800.0, 1600.0]
        .iter()
        .map(|&n| rho_rate(&RateInputs { n, max_dim: 1600.0, ..inputs }).map(|r| r.rho))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let monotone = rhos.windows(2).all(|w| w[1] <= w[0]);
    check(worst <= 1e-12 && monotone, format!("max deviation {worst:.1e}, rho non-increasing in n: {monotone}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = plr_config(vec![vec![12, 15], vec![20, 20]], 40, 5);
    let path = dir.path().join("config.json");
    std::fs::write(&path, cfg.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_mwdml"))
            .args(["mc", "--config"])
            .arg(&path)
            .args(["--threads", threads, "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        let csv = std::fs::read(out.join("replications.csv")).map_err(|e| e.to_string())?;
        let json = std::fs::read(out.join("summary.json")).map_err(|e| e.to_string())?;
        outputs.push((csv, json));
    }
    check(outputs[0] == outputs[1], format!("{} CSV bytes compared across 1 and 4 threads", outputs[0].0.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("hoeffding identity", hoeffding_identity),
        ("recursive/Mobius projections", pi_equivalence),
        ("transversal partitions", transversal_partitions),
        ("variance brute force", variance_brute_force),
        ("GMM closed forms", gmm_oracles),
        ("orthogonality", orthogonality),
        ("coverage", coverage),
        ("variance consistency", variance_consistency),
        ("conservative under degeneracy", conservative_under_degeneracy),
        ("maximal-inequality scaling", maximal_inequality),
        ("rate formulas", rate_formulas),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    let mut broken = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run);
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(Ok(d)) => println!("PASS {:>2} {name}: {d} [{secs:.1}s]", i + 1),
            Ok(Err(d)) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.1}s]", i + 1)
            }
            Err(_) => {
                broken += 1;
                println!("FAIL {:>2} {name}: panicked [{secs:.1}s]", i + 1)
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failed - broken, criteria.len());
    if broken == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

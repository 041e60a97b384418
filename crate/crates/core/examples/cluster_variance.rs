//! Multiway cluster-robust variance at a PLR fit: the per-dimension middle
//! matrices, the summed and inclusion-exclusion forms, and the interval.

use mwdml::gmm::{solve_gmm, GmmSpec};
use mwdml::models::{evaluate_scores, plr_oracle_nuisance, PlrModel};
use mwdml::se_array::{simulate, PlrDesign};
use mwdml::variance::{confidence_interval, v_hat, ScoreArray, VarianceMode};
use mwdml::Shape;

fn main() -> mwdml::Result<()> {
    let design = PlrDesign::default();
    let shape = Shape::new(vec![30, 45])?;
    let sample = simulate(&design.spec(shape.clone())?, 21)?;
    let model = PlrModel::new(0, 1, (2..2 + design.covariate_count()).collect());
    let eta = plr_oracle_nuisance(&design);
    let fit = solve_gmm(&model, &sample, &eta, &GmmSpec::new(vec![0.0]))?;
    let scores = ScoreArray::new(shape, 1, evaluate_scores(&model, &sample, &fit.theta, &eta)?)?;

    for mode in [VarianceMode::Psihat, VarianceMode::Cgm] {
        let v = v_hat(&fit, &scores, mode)?;
        let ci = confidence_interval(&fit.theta, &v.std_errors, 0.95)?;
        println!(
            "{mode:?}: per-dimension {:?}, V_hat {:.4}, se {:.4}, 95% CI [{:.4}, {:.4}]",
            v.per_dimension.iter().map(|m| format!("{:.4}", m[(0, 0)])).collect::<Vec<_>>(),
            v.v_hat[(0, 0)],
            v.std_errors[0],
            ci[0].lower,
            ci[0].upper
        );
    }
    Ok(())
}

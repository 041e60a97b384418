//! Full-sample GMM for the PLR and IV models, with both weighting modes.

use mwdml::gmm::{solve_gmm, GmmSpec, WeightingSpec};
use mwdml::models::{plr_oracle_nuisance, IvModel, Nuisance, PlrModel};
use mwdml::se_array::{simulate, IvDesign, PlrDesign};
use mwdml::Shape;

fn main() -> mwdml::Result<()> {
    let design = PlrDesign::default();
    let sample = simulate(&design.spec(Shape::new(vec![40, 30])?)?, 12)?;
    let model = PlrModel::new(0, 1, (2..2 + design.covariate_count()).collect());
    let fit = solve_gmm(&model, &sample, &plr_oracle_nuisance(&design), &GmmSpec::new(vec![0.0]))?;
    println!(
        "PLR: theta_hat {:.5} (truth {}), {} iterations, FOC {:.1e}, converged {}",
        fit.theta[0], design.theta0, fit.iterations, fit.foc_norm, fit.converged
    );

    let iv = IvDesign::default();
    let sample = simulate(&iv.spec(Shape::new(vec![25, 25])?)?, 8)?;
    let model = IvModel::new(0, 1, vec![2])?;
    for (label, weighting) in [("identity", WeightingSpec::identity()), ("two-step", WeightingSpec::two_step())] {
        let spec = GmmSpec::new(vec![0.0]).with_weighting(weighting).with_bounds(vec![(-10.0, 10.0)]);
        let fit = solve_gmm(&model, &sample, &Nuisance::new(), &spec)?;
        println!("IV, {label}: theta_hat {:.5}, J {:.4}, boundary {}", fit.theta[0], fit.jacobian[(0, 0)], fit.boundary);
    }
    Ok(())
}

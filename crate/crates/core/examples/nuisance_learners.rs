//! Lasso and regression-tree fits of the PLR nuisances on a simulated
//! array, compared with the true conditional means.

use nalgebra::DMatrix;

use mwdml::learners::{default_penalty, fit_lasso, fit_tree, LassoSpec, TreeSpec};
use mwdml::models::{plr_oracle_nuisance, Predictor};
use mwdml::se_array::{simulate, PlrDesign};
use mwdml::Shape;

fn rms_gap(a: &dyn Predictor, b: &dyn Predictor, x: &DMatrix<f64>) -> f64 {
    let sq: f64 = x.row_iter().map(|r| {
        let row: Vec<f64> = r.iter().copied().collect();
        (a.predict(&row) - b.predict(&row)).powi(2)
    }).sum();
    (sq / x.nrows() as f64).sqrt()
}

fn main() -> mwdml::Result<()> {
    let design = PlrDesign::default();
    let shape = Shape::square(2, 30)?;
    let sample = simulate(&design.spec(shape.clone())?, 4)?;
    let p = design.covariate_count();
    let x = DMatrix::from_fn(sample.len(), p, |i, j| sample.record(i)[2 + j]);
    let d = sample.column("d")?;
    let truth = plr_oracle_nuisance(&design);
    let m0 = truth.get("m").expect("m is part of the oracle");

    let lambda = default_penalty(&x, &d, shape.max_dim())?;
    let lasso = fit_lasso(&LassoSpec::new(lambda), &x, &d)?;
    println!(
        "lasso: lambda {lambda:.4}, {} sweeps, coefs {:?} (truth {:?}), rms gap to m0 {:.4}",
        lasso.iterations,
        lasso.coefs.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>(),
        design.beta_m,
        rms_gap(&lasso, m0, &x)
    );

    for leaves in [2, 8, 32] {
        let tree = fit_tree(&TreeSpec::new(leaves, 5), &x, &d)?;
        println!("tree with {:>2} leaves: rms gap to m0 {:.4}", tree.leaf_count(), rms_gap(&tree, m0, &x));
    }
    Ok(())
}

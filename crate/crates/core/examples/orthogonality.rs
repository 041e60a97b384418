//! Pathwise derivatives of the population moment in random nuisance
//! directions: flat for the partialling-out score, not for the naive one.

use mwdml::empirical_process::Population;
use mwdml::models::{
    non_orthogonal_oracle_nuisance, orthogonality_check, plr_oracle_nuisance, random_linear_directions,
    NonOrthogonalPlrModel, PlrModel, StepGrid,
};
use mwdml::se_array::PlrDesign;
use mwdml::Shape;

fn main() -> mwdml::Result<()> {
    let design = PlrDesign::default();
    let spec = design.spec(Shape::square(2, 6)?)?;
    let population = Population::exact(&spec)?;
    let p = design.covariate_count();
    let x: Vec<usize> = (2..2 + p).collect();

    let plr = PlrModel::new(0, 1, x.clone());
    let dirs = random_linear_directions(PlrModel::NUISANCES, p, 5, 3);
    let orth =
        orthogonality_check(&plr, &population, &[design.theta0], &plr_oracle_nuisance(&design), &dirs, StepGrid::default())?;
    println!("orthogonal score:     {:?}", orth.per_direction);

    let naive = NonOrthogonalPlrModel::new(0, 1, x);
    let dirs = random_linear_directions(NonOrthogonalPlrModel::NUISANCES, p, 5, 3);
    let report = orthogonality_check(
        &naive,
        &population,
        &[design.theta0],
        &non_orthogonal_oracle_nuisance(&design),
        &dirs,
        StepGrid::default(),
    )?;
    println!("non-orthogonal score: {:?}", report.per_direction);
    Ok(())
}

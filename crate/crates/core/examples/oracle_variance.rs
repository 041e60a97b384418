//! Ψ₀, J₀ and the limiting variance V of the PLR estimator, computed by
//! exact enumeration, and how V moves with the aspect ratio of the array.

use mwdml::empirical_process::ProjectionMode;
use mwdml::models::{oracle_psi0, oracle_v, plr_oracle_nuisance, PlrModel};
use mwdml::se_array::PlrDesign;
use mwdml::Shape;

fn main() -> mwdml::Result<()> {
    let design = PlrDesign::default();
    let spec = design.spec(Shape::square(2, 10)?)?;
    let model = PlrModel::new(0, 1, (2..2 + design.covariate_count()).collect());
    let oracle = oracle_psi0(&model, &spec, &[design.theta0], &plr_oracle_nuisance(&design), ProjectionMode::Exact)?;
    println!("Psi0 = {:.6}, J0 = {:.6}", oracle.psi0[(0, 0)], oracle.j0[(0, 0)]);
    println!("V = {:.6}", oracle_v(&oracle)?[(0, 0)]);

    for dims in [vec![10, 20], vec![10, 40], vec![10, 1000]] {
        let shape = Shape::new(dims)?;
        let moved = oracle.for_shape(&shape)?;
        println!("{shape}: mu = {:?}, V = {:.6}", moved.mu, oracle_v(&moved)?[(0, 0)]);
    }
    Ok(())
}

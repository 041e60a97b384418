//! Splits the sample mean of 1{x ≤ 0} into one projected term per mask and
//! checks that the terms add back up.

use mwdml::empirical_process::{hoeffding_decompose, pi_projection, ProjectionMode, ScalarFn};
use mwdml::se_array::{simulate, AdditiveDesign, LatentDist};
use mwdml::{Mask, MultiIndex, Shape};

fn main() -> mwdml::Result<()> {
    let atoms = LatentDist::finite(vec![-1.0, 0.0, 2.0], vec![0.5, 0.3, 0.2])?;
    let spec = AdditiveDesign::new(2, atoms).spec(Shape::new(vec![4, 5])?)?;
    let sample = simulate(&spec, 3)?;
    let f = ScalarFn(|r: &[f64]| f64::from(u8::from(r[0] <= 0.0)));

    let h = hoeffding_decompose(&f, &spec, &sample, ProjectionMode::Exact)?;
    println!("P f = {:.6}, sample mean = {:.6}", h.population_mean[0], h.sample_mean[0]);
    for term in &h.terms {
        println!("mask {}: {:+.6}", term.mask, term.value[0]);
    }
    println!("reconstruction residual {:.2e}", h.reconstruction_residual());

    let cell = MultiIndex::new(vec![2, 4]);
    for e in Mask::all_nonzero(2) {
        let p = pi_projection(&f, &spec, &sample, &cell, e, ProjectionMode::Exact)?;
        println!("pi_{e} at (2,4) = {:+.6} (recursive vs Mobius gap {:.1e})", p.recursive[0], p.discrepancy());
    }
    Ok(())
}

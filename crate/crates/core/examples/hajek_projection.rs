//! The Hajek projection of √n(Ē_N f − P f) for f(x) = x on an additive
//! array, and how the leftover shrinks as the lattice grows.

use mwdml::empirical_process::{hajek_projection, ProjectionMode, ScalarFn};
use mwdml::se_array::{simulate, AdditiveDesign, LatentDist};
use mwdml::Shape;

fn main() -> mwdml::Result<()> {
    let design = AdditiveDesign::new(2, LatentDist::Rademacher);
    let f = ScalarFn(|r: &[f64]| r[0]);
    for n in [5, 10, 20, 40] {
        let spec = design.spec(Shape::square(2, n)?)?;
        let (mut sq_total, mut sq_rest) = (0.0, 0.0);
        for seed in 0..200 {
            let h = hajek_projection(&f, &spec, &simulate(&spec, seed)?, ProjectionMode::Exact)?;
            sq_total += h.scaled_mean.powi(2);
            sq_rest += h.remainder().powi(2);
        }
        println!(
            "n = {n:>2}: rms of scaled mean {:.4}, rms remainder {:.4}",
            (sq_total / 200.0).sqrt(),
            (sq_rest / 200.0).sqrt()
        );
    }
    Ok(())
}

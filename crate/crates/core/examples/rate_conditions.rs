//! VC characteristics of common nuisance classes and the resulting rate
//! requirement ρ as the array grows.

use mwdml::learners::{rho_rate, vc_characteristics, ComplexityCase, RateInputs};

fn main() -> mwdml::Result<()> {
    let cases = [
        ("sparse linear, s=3, p=100", ComplexityCase::Glm { s: 3.0, p: 100.0, c: 1.0 }),
        ("tree, 16 leaves, p=10", ComplexityCase::Tree { leaves: 16.0, p: 10.0, c: 1.0 }),
        ("relu net, 3 layers, 200 weights", ComplexityCase::Dnn { layers: 3.0, weights: 200.0, p: 10.0, units: 30.0, c: 1.0 }),
    ];
    for (label, case) in cases {
        let vc = vc_characteristics(&case, 2)?;
        println!("{label}: A = {:.3}, v = {:.3}", vc.a, vc.v);
        for n in [100.0, 1_000.0, 10_000.0, 100_000.0] {
            let inputs = RateInputs { v: vc.v, a: vc.a, max_dim: n, n, envelope_norm: 1.0, q: 4.0, k: 1, order: 2 };
            let r = rho_rate(&inputs)?;
            println!("  n = {n:>7}: branch1 {:.4}, branch2 {:.4}, rho {:.4}", r.branch1, r.branch2, r.rho);
        }
    }
    Ok(())
}

//! The VC-type bound on the uniform entropy integral J(δ) for interaction
//! orders 1 to 3.

use mwdml::empirical_process::entropy_integral_vc;

fn main() -> mwdml::Result<()> {
    let (a, v) = (std::f64::consts::E, 2.0);
    println!("{:>6} {:>10} {:>10} {:>10}", "delta", "k=1", "k=2", "k=3");
    for delta in [0.01, 0.05, 0.1, 0.25, 0.5, 1.0] {
        let row: Vec<String> =
            (1..=3).map(|k| entropy_integral_vc(a, v, k, delta).map(|j| format!("{j:>10.5}"))).collect::<Result<_, _>>()?;
        println!("{delta:>6} {}", row.join(" "));
    }
    for a in [10.0, 100.0, 1000.0] {
        println!("A = {a:>6}: J(1) for k=2 is {:.5}", entropy_integral_vc(a, v, 2, 1.0)?);
    }
    Ok(())
}

use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// ∫_0^δ (1 + v log(A/τ))^{k/2} dτ, the VC-type bound on the uniform
/// entropy integral J_e(δ) for |e| = k.
///
/// Substituting τ = δ e^{−s} removes the endpoint singularity; the
/// truncated tail is bounded by twice the integrand at the cut.
pub fn entropy_integral_vc(a: f64, v: f64, k: usize, delta: f64) -> Result<f64> {
    if !(a >= std::f64::consts::E) || !(v >= 1.0) || k == 0 || !(0.0..=1.0).contains(&delta) {
        return Err(Error::Domain(format!(
            "entropy integral needs A ≥ e, v ≥ 1, k ≥ 1, δ ∈ [0,1]; got A={a}, v={v}, k={k}, δ={delta}"
        )));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let half_k = k as f64 / 2.0;
    let c = 1.0 + v * (a / delta).ln();
    let integrand = move |s: f64| (c + v * s).powf(half_k) * (-s).exp();
    let scale = c.powf(half_k);
    let mut cut = 40.0f64.max(2.0 * k as f64);
    while 2.0 * integrand(cut) > 1e-15 * scale {
        cut *= 1.5;
    }
    let (value, _) = integrate(integrand, 0.0, cut, 1e-13, 0.0);
    Ok(delta * value)
}

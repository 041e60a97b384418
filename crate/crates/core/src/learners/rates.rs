use serde::{Deserialize, Serialize};

use crate::empirical_process::{VcCharacteristics, VcThreshold};
use crate::error::{Error, Result};

/// Nuisance classes with known VC-type characteristics. `c` is the
/// unspecified universal constant, 1 by default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum ComplexityCase {
    /// s-sparse generalised linear predictors in p features.
    Glm { s: f64, p: f64, #[serde(default = "one")] c: f64 },
    /// Regression trees with L leaves in p features.
    Tree { leaves: f64, p: f64, #[serde(default = "one")] c: f64 },
    /// ReLU networks with L layers, W parameters, p features and U hidden units.
    Dnn { layers: f64, weights: f64, p: f64, units: f64, #[serde(default = "one")] c: f64 },
}

fn one() -> f64 {
    1.0
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// (A_n, v_n) for a nuisance class, with A_n floored at
/// e^{2(K−1)/16} ∨ e for order-K arrays.
pub fn vc_characteristics(case: &ComplexityCase, order: usize) -> Result<VcCharacteristics> {
    if order == 0 {
        return Err(Error::Domain("array order must be at least 1".into()));
    }
    let floor = VcThreshold::for_order(order).exponent_over_16;
    let (a, v) = match *case {
        ComplexityCase::Glm { s, p, c } => {
            let (s, p, c) = (positive("s", s)?, positive("p", p)?, positive("C", c)?);
            (c * std::f64::consts::E * p / s, s)
        }
        ComplexityCase::Tree { leaves, p, c } => {
            let (l, p, c) = (positive("L", leaves)?, positive("p", p)?, positive("C", c)?);
            (c, 2.0 * c * l * (2.0 * l * p).ln())
        }
        ComplexityCase::Dnn { layers, weights, p, units, c } => {
            let l = positive("L", layers)?;
            let w = positive("W", weights)?;
            let (p, u, c) = (positive("p", p)?, positive("U", units)?, positive("C", c)?);
            (c, 2.0 * c * l * w * (p * u).ln())
        }
    };
    Ok(VcCharacteristics { a: a.max(floor), v })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub v: f64,
    pub a: f64,
    /// N̄ = max_k N_k.
    pub max_dim: f64,
    /// n = min_k N_k.
    pub n: f64,
    /// ‖F‖_{P,q}.
    pub envelope_norm: f64,
    /// Moment order q > 2.
    pub q: f64,
    /// Interaction order k.
    pub k: usize,
    /// Array order K.
    pub order: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateDiagnostic {
    /// (v log(A∨N̄)/n)^{k/2}.
    pub branch1: f64,
    /// (‖F‖ v log(A∨N̄)/n^{1/2−1/q})^k.
    pub branch2: f64,
    pub rho: f64,
}

/// ρ_{n,k} = max of the two branches.
pub fn rho_rate(inputs: &RateInputs) -> Result<RateDiagnostic> {
    let RateInputs { v, a, max_dim, n, envelope_norm, q, k, order } = *inputs;
    if !(a >= std::f64::consts::E) || !(v >= 1.0) || !(q > 2.0) || k == 0 || k > order {
        return Err(Error::Domain(format!(
            "rate inputs need A ≥ e, v ≥ 1, q > 2, 1 ≤ k ≤ K; got A={a}, v={v}, q={q}, k={k}, K={order}"
        )));
    }
    if !(n >= 1.0) || !(max_dim >= 1.0) || !(envelope_norm >= 0.0) || !envelope_norm.is_finite() {
        return Err(Error::Domain(format!(
            "rate inputs need n ≥ 1, N̄ ≥ 1 and a finite envelope norm; got n={n}, N̄={max_dim}, ‖F‖={envelope_norm}"
        )));
    }
    let complexity = v * a.max(max_dim).ln();
    let branch1 = (complexity / n).powf(k as f64 / 2.0);
    let branch2 = (envelope_norm * complexity / n.powf(0.5 - 1.0 / q)).powi(k as i32);
    Ok(RateDiagnostic { branch1, branch2, rho: branch1.max(branch2) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn glm_characteristics() {
        let vc = vc_characteristics(&ComplexityCase::Glm { s: 3.0, p: 100.0, c: 1.0 }, 2).unwrap();
        assert_eq!(vc.v, 3.0);
        assert!((vc.a - 90.609_394_281_968_17).abs() < 1e-12);
    }

    #[test]
    fn tree_and_dnn_characteristics() {
        let vc = vc_characteristics(&ComplexityCase::Tree { leaves: 1.0, p: 1.0, c: 1.0 }, 2).unwrap();
        assert!((vc.v - 1.386_294_361_119_890_6).abs() < 1e-12);
        assert_eq!(vc.a, E);
        let vc = vc_characteristics(
            &ComplexityCase::Dnn { layers: 3.0, weights: 10.0, p: 4.0, units: 5.0, c: 1.0 },
            2,
        )
        .unwrap();
        assert!((vc.v - 60.0 * 20f64.ln()).abs() < 1e-12);
        assert!(vc_characteristics(&ComplexityCase::Glm { s: 0.0, p: 1.0, c: 1.0 }, 2).is_err());
    }

    #[test]
    fn rate_example() {
        let inputs = RateInputs { v: 2.0, a: E, max_dim: 100.0, n: 400.0, envelope_norm: 1.0, q: 4.0, k: 1, order: 2 };
        let r = rho_rate(&inputs).unwrap();
        assert!((r.branch1 - 0.151_742_712_938_514_63).abs() < 1e-12);
        assert!((r.branch2 - 2.059_494_716_764_944_4).abs() < 1e-12);
        assert_eq!(r.rho, r.branch2);
        let r4 = rho_rate(&RateInputs { n: 1600.0, ..inputs }).unwrap();
        assert!((r4.branch1 - r.branch1 / 2.0).abs() < 1e-15);
        let r2 = rho_rate(&RateInputs { k: 2, ..inputs }).unwrap();
        assert_eq!(r2.rho, (r.branch1 * r.branch1).max(r.branch2 * r.branch2));
        assert!(r4.rho <= r.rho);
    }
}

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a Gram matrix counts as singular.
const RANK_TOL: f64 = 1e-12;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Inverse of a symmetric positive definite matrix.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let ev = eigenvalues(m);
    let max = ev.last().copied().unwrap_or(0.0);
    let min = ev.first().copied().unwrap_or(0.0);
    if !(max > 0.0) || min <= RANK_TOL * max {
        return Err(Error::Singular(format!("{what}: eigenvalues in [{min:e}, {max:e}]")));
    }
    let chol = nalgebra::Cholesky::new(symmetrize(m))
        .ok_or_else(|| Error::Singular(format!("{what}: Cholesky failed")))?;
    Ok(symmetrize(&chol.inverse()))
}

/// (J'ΥJ)^{-1} J'Υ Ψ ΥJ (J'ΥJ)^{-1}, symmetrized.
pub(crate) fn sandwich(j: &DMatrix<f64>, w: &DMatrix<f64>, psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let jw = j.transpose() * w;
    let bread = spd_inverse(&(&jw * j), "J'ΥJ").map_err(|e| match e {
        Error::Singular(msg) => Error::RankDeficient(msg),
        other => other,
    })?;
    let meat = &jw * psi * jw.transpose();
    Ok(symmetrize(&(&bread * meat * &bread)))
}

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use super::nuisance::{LinearPredictor, Nuisance};
use super::score::{MomentModel, NonOrthogonalPlrModel, PlrModel};
use crate::empirical_process::{projection_moments, Functional, Population, ProjectionMode};
use crate::error::{Error, Result};
use crate::linalg;
use crate::se_array::{DgpSpec, Mask, PlrDesign, Shape};

/// ψ(·, θ, η) as a vector functional of the observation record.
pub struct ScoreFunctional<'a> {
    pub model: &'a dyn MomentModel,
    pub theta: &'a [f64],
    pub eta: &'a Nuisance,
}

impl Functional for ScoreFunctional<'_> {
    fn dim(&self) -> usize {
        self.model.moment_dim()
    }

    fn eval(&self, record: &[f64], out: &mut [f64]) {
        self.model.score(record, self.theta, self.eta, out);
    }
}

/// Population quantities entering the limiting variance V.
#[derive(Clone, Debug, Serialize)]
pub struct OracleVariance {
    pub shape: Shape,
    /// μ_k = n / N_k.
    pub mu: Vec<f64>,
    /// Var(E[ψ | U_{e_k}]) for each dimension k.
    #[serde(serialize_with = "serialize_matrices")]
    pub dimension_variances: Vec<DMatrix<f64>>,
    /// Σ_k μ_k Var(E[ψ | U_{e_k}]).
    #[serde(serialize_with = "serialize_matrix")]
    pub psi0: DMatrix<f64>,
    /// J₀ = −∂_θ E ψ.
    #[serde(serialize_with = "serialize_matrix")]
    pub j0: DMatrix<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub upsilon: DMatrix<f64>,
    /// No clustering dimension carries score variance.
    pub degenerate: bool,
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub(crate) fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(matrix_rows(m))
}

fn serialize_matrices<S: serde::Serializer>(v: &[DMatrix<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(matrix_rows))
}

impl OracleVariance {
    pub fn with_upsilon(mut self, upsilon: DMatrix<f64>) -> Self {
        self.upsilon = upsilon;
        self
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.psi0)
    }

    /// The same population pieces rescaled to another shape of equal order.
    pub fn for_shape(&self, shape: &Shape) -> Result<Self> {
        if shape.order() != self.shape.order() {
            return Err(Error::InvalidShape(format!("cannot move oracle from {} to {shape}", self.shape)));
        }
        let mu = mu_for(shape);
        let psi0 = combine(&mu, &self.dimension_variances);
        Ok(Self { shape: shape.clone(), mu, psi0, ..self.clone() })
    }
}

fn mu_for(shape: &Shape) -> Vec<f64> {
    let n = shape.min_dim() as f64;
    shape.dims().iter().map(|&nk| n / nk as f64).collect()
}

fn combine(mu: &[f64], parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let q = parts[0].nrows();
    let sum = mu.iter().zip(parts).fold(DMatrix::zeros(q, q), |acc, (m, p)| acc + p * *m);
    linalg::symmetrize(&sum)
}

const DEGENERACY_TOL: f64 = 1e-12;

/// Ψ₀ and J₀ at (θ₀, η₀) for the law of `spec`.
///
/// Exact mode enumerates the latent supports. In Monte Carlo mode the
/// dimension variances use paired draws and J₀ a fixed-seed sample of the
/// same size.
pub fn oracle_psi0(
    model: &dyn MomentModel,
    spec: &DgpSpec,
    theta0: &[f64],
    eta0: &Nuisance,
    mode: ProjectionMode,
) -> Result<OracleVariance> {
    if theta0.len() != model.param_dim() {
        return Err(Error::Domain("θ₀ has the wrong length".into()));
    }
    eta0.expect_names(model.nuisance_names())?;
    let psi = ScoreFunctional { model, theta: theta0, eta: eta0 };
    let order = spec.shape().order();
    let dimension_variances = (0..order)
        .map(|k| {
            projection_moments(&psi, spec, Mask::unit(order, k), mode).map(|m| linalg::symmetrize(&m.covariance()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mu = mu_for(spec.shape());
    let psi0 = combine(&mu, &dimension_variances);
    let population = match mode {
        ProjectionMode::Exact => Population::exact(spec)?,
        ProjectionMode::MonteCarlo { draws, seed } => Population::sampled(spec, draws, seed),
    };
    let (q, d) = (model.moment_dim(), model.param_dim());
    let mut j0 = DMatrix::zeros(q, d);
    let mut buf = vec![0.0; q * d];
    for (r, w) in population.iter() {
        if !model.score_derivative(r, theta0, eta0, &mut buf) {
            return Err(Error::Domain(format!("model `{}` has no analytic θ-derivative", model.name())));
        }
        for i in 0..q {
            for j in 0..d {
                j0[(i, j)] -= w * buf[i * d + j];
            }
        }
    }
    let degenerate = dimension_variances.iter().all(|v| v.iter().all(|x| x.abs() <= DEGENERACY_TOL));
    Ok(OracleVariance {
        shape: spec.shape().clone(),
        mu,
        dimension_variances,
        psi0,
        j0,
        upsilon: DMatrix::identity(q, q),
        degenerate,
    })
}

/// V = (J₀'ΥJ₀)^{−1} J₀'ΥΨ₀ΥJ₀ (J₀'ΥJ₀)^{−1}.
pub fn oracle_v(oracle: &OracleVariance) -> Result<DMatrix<f64>> {
    linalg::sandwich(&oracle.j0, &oracle.upsilon, &oracle.psi0)
}

/// True nuisances of the bundled PLR design: ℓ₀(x) = x'(θ₀β_m + β_g),
/// m₀(x) = x'β_m.
pub fn plr_oracle_nuisance(design: &PlrDesign) -> Nuisance {
    let l: Vec<f64> = design.beta_m.iter().zip(&design.beta_g).map(|(m, g)| design.theta0 * m + g).collect();
    Nuisance::new()
        .with(PlrModel::NUISANCES[0], Arc::new(LinearPredictor::new(0.0, l)))
        .with(PlrModel::NUISANCES[1], Arc::new(LinearPredictor::new(0.0, design.beta_m.clone())))
}

/// g₀(x) = x'β_g for the non-orthogonal control under the PLR design.
pub fn non_orthogonal_oracle_nuisance(design: &PlrDesign) -> Nuisance {
    Nuisance::new().with(NonOrthogonalPlrModel::NUISANCES[0], Arc::new(LinearPredictor::new(0.0, design.beta_g.clone())))
}

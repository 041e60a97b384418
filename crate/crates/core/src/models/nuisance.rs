use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A real-valued function of a covariate vector.
pub trait Predictor: Send + Sync + fmt::Debug {
    fn predict(&self, covariates: &[f64]) -> f64;
}

/// x ↦ intercept + coefs·x.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPredictor {
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

impl LinearPredictor {
    pub fn new(intercept: f64, coefs: Vec<f64>) -> Self {
        Self { intercept, coefs }
    }

    pub fn zero(dim: usize) -> Self {
        Self { intercept: 0.0, coefs: vec![0.0; dim] }
    }
}

impl Predictor for LinearPredictor {
    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// A closure as a predictor.
#[derive(Clone)]
pub struct FnPredictor(pub Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>);

impl fmt::Debug for FnPredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnPredictor")
    }
}

impl Predictor for FnPredictor {
    fn predict(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// base + τ·direction.
#[derive(Clone, Debug)]
struct Shifted {
    base: Arc<dyn Predictor>,
    direction: Arc<dyn Predictor>,
    tau: f64,
}

impl Predictor for Shifted {
    fn predict(&self, x: &[f64]) -> f64 {
        self.base.predict(x) + self.tau * self.direction.predict(x)
    }
}

/// Named nuisance functions η = (η_1, ..., η_m) of the covariates.
#[derive(Clone, Debug, Default)]
pub struct Nuisance {
    members: Vec<(String, Arc<dyn Predictor>)>,
}

impl Nuisance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, predictor: Arc<dyn Predictor>) -> Self {
        self.members.push((name.into(), predictor));
        self
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Result<&dyn Predictor> {
        self.members
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.as_ref())
            .ok_or_else(|| Error::Domain(format!("nuisance `{name}` is not set")))
    }

    /// Member at a fixed position; callers check names once up front.
    pub(crate) fn at(&self, pos: usize) -> &dyn Predictor {
        self.members[pos].1.as_ref()
    }

    /// Verifies that members appear under exactly the given names, in order.
    pub fn expect_names(&self, names: &[&str]) -> Result<()> {
        if self.members.len() != names.len() || self.names().zip(names).any(|(a, b)| a != *b) {
            return Err(Error::Domain(format!(
                "nuisance members {:?} do not match {:?}",
                self.names().collect::<Vec<_>>(),
                names
            )));
        }
        Ok(())
    }

    /// η + τ·η̃, member by member; `direction` must carry the same names.
    pub fn perturbed(&self, direction: &Nuisance, tau: f64) -> Result<Nuisance> {
        let names: Vec<&str> = self.names().collect();
        direction.expect_names(&names)?;
        Ok(Nuisance {
            members: self
                .members
                .iter()
                .zip(&direction.members)
                .map(|((n, base), (_, dir))| {
                    let p: Arc<dyn Predictor> =
                        Arc::new(Shifted { base: base.clone(), direction: dir.clone(), tau });
                    (n.clone(), p)
                })
                .collect(),
        })
    }

    /// Root-mean-square distance of each member's predictions over the given
    /// covariate rows, in member order.
    pub fn rms_distances<'a>(
        &self,
        other: &Nuisance,
        rows: impl IntoIterator<Item = &'a [f64]>,
    ) -> Result<Vec<f64>> {
        let names: Vec<&str> = self.names().collect();
        other.expect_names(&names)?;
        let mut sums = vec![0.0; self.len()];
        let mut count = 0usize;
        for x in rows {
            for (j, s) in sums.iter_mut().enumerate() {
                *s += (self.at(j).predict(x) - other.at(j).predict(x)).powi(2);
            }
            count += 1;
        }
        Ok(sums.into_iter().map(|s| (s / count.max(1) as f64).sqrt()).collect())
    }

    /// ‖η − η'‖ as the largest member RMS distance.
    pub fn rms_distance<'a>(&self, other: &Nuisance, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
        Ok(self.rms_distances(other, rows)?.into_iter().fold(0.0, f64::max))
    }
}

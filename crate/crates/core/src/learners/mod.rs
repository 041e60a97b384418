//! First-stage nuisance learners and the complexity and rate calculators
//! for their function classes.

mod lasso;
mod rates;
mod tree;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use lasso::{default_penalty, fit_lasso, soft_threshold, LassoFit, LassoSpec, Link};
pub use rates::{rho_rate, vc_characteristics, ComplexityCase, RateDiagnostic, RateInputs};
pub use tree::{fit_tree, Node, TreeFit, TreeSpec};

use crate::error::Result;
use crate::models::Predictor;

/// Learner choice in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum LearnerConfig {
    /// Use the design's true nuisance functions.
    Oracle,
    Lasso {
        /// Defaults to [`default_penalty`].
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        link: Link,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Tree {
        max_leaves: usize,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
}

fn default_max_iter() -> usize {
    1000
}

fn default_tol() -> f64 {
    1e-10
}

fn default_min_leaf() -> usize {
    5
}

/// A fitted nuisance member together with the penalty actually used.
#[derive(Clone, Debug)]
pub struct FittedLearner {
    pub predictor: Arc<dyn Predictor>,
    pub lambda: Option<f64>,
    pub converged: bool,
}

impl LearnerConfig {
    pub fn lasso() -> Self {
        Self::Lasso { lambda: None, link: Link::Identity, max_iter: default_max_iter(), tol: default_tol() }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, Self::Oracle)
    }

    /// Fits one nuisance function; `max_dim` is N̄ for the default penalty.
    /// Returns `None` for the oracle learner.
    pub fn fit(&self, x: &DMatrix<f64>, y: &[f64], max_dim: usize) -> Result<Option<FittedLearner>> {
        match self {
            Self::Oracle => Ok(None),
            Self::Lasso { lambda, link, max_iter, tol } => {
                let lambda = match lambda {
                    Some(l) => *l,
                    None => default_penalty(x, y, max_dim)?,
                };
                let spec = LassoSpec { lambda, link: *link, max_iter: *max_iter, tol: *tol };
                let fit = fit_lasso(&spec, x, y)?;
                let converged = fit.converged;
                Ok(Some(FittedLearner { predictor: Arc::new(fit), lambda: Some(lambda), converged }))
            }
            Self::Tree { max_leaves, min_leaf } => {
                let fit = fit_tree(&TreeSpec::new(*max_leaves, *min_leaf), x, y)?;
                Ok(Some(FittedLearner { predictor: Arc::new(fit), lambda: None, converged: true }))
            }
        }
    }
}

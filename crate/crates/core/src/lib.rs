//! Cross-fitting-free debiased GMM estimation for multiway clustered data.
//!
//! The crate is organised bottom-up:
//!
//! - [`se_array`]: multi-index lattices, latent-factor tables and the
//!   generation of separately exchangeable, dissociated arrays.
//! - [`partition`]: transversal partitions of masked index sets.
//! - [`empirical_process`]: Hoeffding-type projections, entropy integrals and
//!   Monte Carlo checks of maximal-inequality scaling.
//! - [`models`]: moment models, Neyman-orthogonality checks and oracle
//!   asymptotic variances.
//! - [`learners`]: lasso and regression-tree nuisance learners plus the
//!   complexity/rate calculators.
//! - [`gmm`]: full-sample GMM estimation.
//! - [`variance`]: multiway cluster-robust middle matrices and sandwich
//!   variances.
//! - [`harness`]: JSON configuration, Monte Carlo driver, reports and the
//!   command-line front end.

pub mod empirical_process;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod learners;
mod linalg;
pub mod models;
pub mod partition;
mod quadrature;
pub mod se_array;
pub mod variance;

pub use error::{Error, Result};
pub use se_array::{ClusteredSample, DgpSpec, LatentTable, Mask, MultiIndex, Shape};

//! Hoeffding-type projections of functions of SE arrays, the Hajek
//! projection, uniform entropy integrals and Monte Carlo checks of maximal
//! inequalities.
//!
//! Projections integrate latent factors out of the composition map. In
//! [`ProjectionMode::Exact`] the joint support is enumerated, which needs
//! every latent law involved to have finite support.

mod bounds;
mod decomposition;
mod entropy;
mod functional;
mod projection;

pub use bounds::{bound_check, empirical_sup_process, BoundReport, BoundRow, MaskSummary, RatioTrend, SupEstimate, VcThreshold};
pub use decomposition::{hajek_projection, hoeffding_decompose, HajekProjection, HoeffdingComponents, HoeffdingTerm};
pub use entropy::entropy_integral_vc;
pub use functional::{FunctionGrid, Functional, RecordFn, ScalarFn, VcCharacteristics};
pub use projection::{
    conditional_projection, pi_conditional_mean_residual, pi_projection, projection_moments, PiProjection,
    Population, ProjectionMode, ProjectionMoments, MAX_ENUMERATION,
};

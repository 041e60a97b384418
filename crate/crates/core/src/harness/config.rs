use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GmmSpec;
use crate::learners::LearnerConfig;
use crate::models::ModelConfig;
use crate::se_array::{Design, DgpSpec, Mask, Shape};
use crate::variance::VarianceMode;

/// A design family plus optional switches that force latent factors to
/// their means.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DgpConfig {
    #[serde(flatten)]
    pub design: Design,
    /// Keep only the full-interaction factor random.
    #[serde(default)]
    pub iid_degenerate: bool,
    /// Masks as 0/1 flag lists, e.g. `[[1, 0]]`.
    #[serde(default)]
    pub constant_masks: Vec<Vec<u8>>,
}

impl DgpConfig {
    pub fn new(design: Design) -> Self {
        Self { design, iid_degenerate: false, constant_masks: Vec::new() }
    }

    pub fn spec(&self, shape: Shape) -> Result<DgpSpec> {
        let mut spec = self.design.spec(shape)?;
        if self.iid_degenerate {
            spec = spec.iid_degenerate();
        }
        if !self.constant_masks.is_empty() {
            let masks = parse_masks(&self.constant_masks)?;
            if masks.iter().any(|m| m.order() != self.design.order()) {
                return Err(Error::Config("constant mask of the wrong order".into()));
            }
            spec = spec.with_constant_masks(&masks);
        }
        Ok(spec)
    }
}

pub(crate) fn parse_masks(flags: &[Vec<u8>]) -> Result<Vec<Mask>> {
    flags.iter().map(|f| Mask::from_flags(f).map_err(|e| Error::Config(e.to_string()))).collect()
}

/// How the population quantities behind V are computed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OracleConfig {
    /// Enumerate latent supports, falling back to Monte Carlo when a support
    /// is continuous or too large.
    #[default]
    Exact,
    MonteCarlo {
        #[serde(default = "default_oracle_draws")]
        draws: usize,
        #[serde(default)]
        seed: u64,
    },
    None,
}

pub(crate) fn default_oracle_draws() -> usize {
    200_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub replications: String,
    pub summary: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self { replications: "replications.csv".into(), summary: "summary.json".into() }
    }
}

/// Threshold-indicator grid checks of maximal-inequality scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "default_field")]
    pub field: String,
    pub thresholds: Vec<f64>,
    /// Defaults to the unit masks plus the full mask.
    #[serde(default)]
    pub masks: Option<Vec<Vec<u8>>>,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_moment_order")]
    pub moment_order: f64,
    #[serde(default = "default_bound_reps")]
    pub replications: usize,
}

fn default_field() -> String {
    "y".into()
}

fn default_moment_order() -> f64 {
    2.0
}

fn default_bound_reps() -> usize {
    300
}

impl BoundsConfig {
    pub fn masks(&self, order: usize) -> Result<Vec<Mask>> {
        match &self.masks {
            Some(m) => parse_masks(m),
            None => {
                let mut m: Vec<Mask> = (0..order).map(|k| Mask::unit(order, k)).collect();
                if order > 1 {
                    m.push(Mask::full(order));
                }
                Ok(m)
            }
        }
    }
}

/// The single JSON document driving every subcommand.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub dgp: DgpConfig,
    #[serde(default = "ModelConfig::plr")]
    pub model: ModelConfig,
    #[serde(default = "oracle_learner")]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub estimation: GmmSpec,
    #[serde(default)]
    pub variance: VarianceMode,
    pub shapes: Vec<Vec<usize>>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub output: OutputPaths,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
}

fn oracle_learner() -> LearnerConfig {
    LearnerConfig::Oracle
}

fn default_replications() -> usize {
    100
}

fn default_level() -> f64 {
    0.95
}

impl McConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level {} outside (0, 1)", self.level)));
        }
        if self.shapes.is_empty() {
            return Err(Error::Config("at least one shape is required".into()));
        }
        let order = self.dgp.design.order();
        for s in self.shape_list()? {
            if s.order() != order {
                return Err(Error::Config(format!("shape {s} does not match design order {order}")));
            }
        }
        parse_masks(&self.dgp.constant_masks)?;
        Ok(())
    }

    pub fn shape_list(&self) -> Result<Vec<Shape>> {
        self.shapes.iter().map(|d| Shape::new(d.clone()).map_err(|e| Error::Config(e.to_string()))).collect()
    }
}

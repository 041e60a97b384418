use std::borrow::Cow;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::nuisance::Nuisance;
use crate::error::{Error, Result};

/// B(x) and α in ‖ψ(x,θ) − ψ(x,θ')‖ ≤ B(x)‖θ − θ'‖^α.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderModulus {
    pub bound: f64,
    pub exponent: f64,
}

/// A moment function ψ(x, θ, η) ∈ ℝ^q with parameter θ ∈ ℝ^d.
pub trait MomentModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// q, the number of moment conditions.
    fn moment_dim(&self) -> usize;

    /// d, the number of parameters.
    fn param_dim(&self) -> usize;

    /// Names the nuisance must carry, in order.
    fn nuisance_names(&self) -> &'static [&'static str] {
        &[]
    }

    /// Record positions each nuisance regresses on the covariates, aligned
    /// with [`MomentModel::nuisance_names`]. Empty when the nuisance cannot be
    /// learned by a plain regression.
    fn nuisance_targets(&self) -> Vec<usize> {
        Vec::new()
    }

    /// The covariates the nuisance functions are evaluated at.
    fn covariates<'r>(&self, _record: &'r [f64]) -> Cow<'r, [f64]> {
        Cow::Borrowed(&[])
    }

    fn score(&self, record: &[f64], theta: &[f64], eta: &Nuisance, out: &mut [f64]);

    /// ∂ψ/∂θ as a q×d row-major block. Returns false when no analytic form
    /// is available.
    fn score_derivative(&self, _record: &[f64], _theta: &[f64], _eta: &Nuisance, _out: &mut [f64]) -> bool {
        false
    }

    fn holder_modulus(&self, _record: &[f64], _eta: &Nuisance) -> Option<HolderModulus> {
        None
    }
}

/// Selected record positions, borrowed as a slice when contiguous.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Columns {
    indices: Vec<usize>,
    range: Option<Range<usize>>,
}

impl Columns {
    pub(crate) fn new(indices: Vec<usize>) -> Self {
        let range = match indices.first() {
            Some(&s) if indices.iter().enumerate().all(|(j, &i)| i == s + j) => Some(s..s + indices.len()),
            None => Some(0..0),
            _ => None,
        };
        Self { indices, range }
    }

    pub(crate) fn view<'r>(&self, record: &'r [f64]) -> Cow<'r, [f64]> {
        match &self.range {
            Some(r) => Cow::Borrowed(&record[r.clone()]),
            None => Cow::Owned(self.indices.iter().map(|&i| record[i]).collect()),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.indices.len()
    }
}

fn position(fields: &[String], name: &str) -> Result<usize> {
    fields.iter().position(|f| f == name).ok_or_else(|| Error::MissingField(name.to_string()))
}

fn positions(fields: &[String], names: &[String]) -> Result<Vec<usize>> {
    names.iter().map(|n| position(fields, n)).collect()
}

/// Fields named `<prefix><digits>`, in field order.
fn numbered(fields: &[String], prefix: &str) -> Vec<String> {
    fields
        .iter()
        .filter(|f| {
            f.strip_prefix(prefix)
                .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
        })
        .cloned()
        .collect()
}

/// ψ = x − θ.
#[derive(Clone, Debug)]
pub struct LocationModel {
    field: usize,
}

impl LocationModel {
    pub fn new(field: usize) -> Self {
        Self { field }
    }
}

impl MomentModel for LocationModel {
    fn name(&self) -> &'static str {
        "location"
    }

    fn moment_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn score(&self, record: &[f64], theta: &[f64], _eta: &Nuisance, out: &mut [f64]) {
        out[0] = record[self.field] - theta[0];
    }

    fn score_derivative(&self, _record: &[f64], _theta: &[f64], _eta: &Nuisance, out: &mut [f64]) -> bool {
        out[0] = -1.0;
        true
    }

    fn holder_modulus(&self, _record: &[f64], _eta: &Nuisance) -> Option<HolderModulus> {
        Some(HolderModulus { bound: 1.0, exponent: 1.0 })
    }
}

/// Linear IV: ψ_j = (y − θd) z_j for each instrument z_j.
#[derive(Clone, Debug)]
pub struct IvModel {
    y: usize,
    d: usize,
    instruments: Vec<usize>,
}

impl IvModel {
    pub fn new(y: usize, d: usize, instruments: Vec<usize>) -> Result<Self> {
        if instruments.is_empty() {
            return Err(Error::Config("the IV model needs at least one instrument".into()));
        }
        Ok(Self { y, d, instruments })
    }
}

impl MomentModel for IvModel {
    fn name(&self) -> &'static str {
        "iv"
    }

    fn moment_dim(&self) -> usize {
        self.instruments.len()
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn score(&self, record: &[f64], theta: &[f64], _eta: &Nuisance, out: &mut [f64]) {
        let resid = record[self.y] - theta[0] * record[self.d];
        for (o, &z) in out.iter_mut().zip(&self.instruments) {
            *o = resid * record[z];
        }
    }

    fn score_derivative(&self, record: &[f64], _theta: &[f64], _eta: &Nuisance, out: &mut [f64]) -> bool {
        for (o, &z) in out.iter_mut().zip(&self.instruments) {
            *o = -record[self.d] * record[z];
        }
        true
    }

    fn holder_modulus(&self, record: &[f64], _eta: &Nuisance) -> Option<HolderModulus> {
        let zn = self.instruments.iter().map(|&z| record[z] * record[z]).sum::<f64>().sqrt();
        Some(HolderModulus { bound: record[self.d].abs() * zn, exponent: 1.0 })
    }
}

/// Partially linear regression with the residual-product score
/// ψ = (y − ℓ(x) − θ(d − m(x)))(d − m(x)), nuisances ℓ = E[y|x], m = E[d|x].
#[derive(Clone, Debug)]
pub struct PlrModel {
    y: usize,
    d: usize,
    x: Columns,
}

impl PlrModel {
    pub const NUISANCES: &'static [&'static str] = &["l", "m"];

    pub fn new(y: usize, d: usize, covariates: Vec<usize>) -> Self {
        Self { y, d, x: Columns::new(covariates) }
    }

    pub fn covariate_count(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, record: &[f64], eta: &Nuisance) -> (f64, f64) {
        let x = self.x.view(record);
        (record[self.y] - eta.at(0).predict(&x), record[self.d] - eta.at(1).predict(&x))
    }
}

impl MomentModel for PlrModel {
    fn name(&self) -> &'static str {
        "plr"
    }

    fn moment_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn nuisance_names(&self) -> &'static [&'static str] {
        Self::NUISANCES
    }

    fn nuisance_targets(&self) -> Vec<usize> {
        vec![self.y, self.d]
    }

    fn covariates<'r>(&self, record: &'r [f64]) -> Cow<'r, [f64]> {
        self.x.view(record)
    }

    fn score(&self, record: &[f64], theta: &[f64], eta: &Nuisance, out: &mut [f64]) {
        let (ry, rd) = self.residuals(record, eta);
        out[0] = (ry - theta[0] * rd) * rd;
    }

    fn score_derivative(&self, record: &[f64], _theta: &[f64], eta: &Nuisance, out: &mut [f64]) -> bool {
        let (_, rd) = self.residuals(record, eta);
        out[0] = -rd * rd;
        true
    }

    fn holder_modulus(&self, record: &[f64], eta: &Nuisance) -> Option<HolderModulus> {
        let (_, rd) = self.residuals(record, eta);
        Some(HolderModulus { bound: rd * rd, exponent: 1.0 })
    }
}

/// A deliberately non-orthogonal control: ψ = (y − θd − g(x)) d.
#[derive(Clone, Debug)]
pub struct NonOrthogonalPlrModel {
    y: usize,
    d: usize,
    x: Columns,
}

impl NonOrthogonalPlrModel {
    pub const NUISANCES: &'static [&'static str] = &["g"];

    pub fn new(y: usize, d: usize, covariates: Vec<usize>) -> Self {
        Self { y, d, x: Columns::new(covariates) }
    }
}

impl MomentModel for NonOrthogonalPlrModel {
    fn name(&self) -> &'static str {
        "non_orthogonal_plr"
    }

    fn moment_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn nuisance_names(&self) -> &'static [&'static str] {
        Self::NUISANCES
    }

    fn covariates<'r>(&self, record: &'r [f64]) -> Cow<'r, [f64]> {
        self.x.view(record)
    }

    fn score(&self, record: &[f64], theta: &[f64], eta: &Nuisance, out: &mut [f64]) {
        let g = eta.at(0).predict(&self.x.view(record));
        let d = record[self.d];
        out[0] = (record[self.y] - theta[0] * d - g) * d;
    }

    fn score_derivative(&self, record: &[f64], _theta: &[f64], _eta: &Nuisance, out: &mut [f64]) -> bool {
        out[0] = -record[self.d] * record[self.d];
        true
    }
}

fn default_y() -> String {
    "y".into()
}

fn default_d() -> String {
    "d".into()
}

/// Model choice by name plus its field bindings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelConfig {
    Location {
        #[serde(default = "default_y")]
        field: String,
    },
    Iv {
        #[serde(default = "default_y")]
        y: String,
        #[serde(default = "default_d")]
        d: String,
        /// Defaults to every field named z1, z2, ...
        #[serde(default)]
        instruments: Option<Vec<String>>,
    },
    Plr {
        #[serde(default = "default_y")]
        y: String,
        #[serde(default = "default_d")]
        d: String,
        /// Defaults to every field named x1, x2, ...
        #[serde(default)]
        covariates: Option<Vec<String>>,
    },
    NonOrthogonalPlr {
        #[serde(default = "default_y")]
        y: String,
        #[serde(default = "default_d")]
        d: String,
        #[serde(default)]
        covariates: Option<Vec<String>>,
    },
}

impl ModelConfig {
    pub fn plr() -> Self {
        Self::Plr { y: default_y(), d: default_d(), covariates: None }
    }

    /// Resolves field names against a record layout.
    pub fn build(&self, fields: &[String]) -> Result<Arc<dyn MomentModel>> {
        let pick = |given: &Option<Vec<String>>, prefix: &str| -> Result<Vec<usize>> {
            let names = given.clone().unwrap_or_else(|| numbered(fields, prefix));
            if names.is_empty() {
                return Err(Error::Config(format!("no `{prefix}*` fields found for the model")));
            }
            positions(fields, &names)
        };
        Ok(match self {
            Self::Location { field } => Arc::new(LocationModel::new(position(fields, field)?)),
            Self::Iv { y, d, instruments } => Arc::new(IvModel::new(
                position(fields, y)?,
                position(fields, d)?,
                pick(instruments, "z")?,
            )?),
            Self::Plr { y, d, covariates } => {
                Arc::new(PlrModel::new(position(fields, y)?, position(fields, d)?, pick(covariates, "x")?))
            }
            Self::NonOrthogonalPlr { y, d, covariates } => Arc::new(NonOrthogonalPlrModel::new(
                position(fields, y)?,
                position(fields, d)?,
                pick(covariates, "x")?,
            )),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearPredictor;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn scalar_examples() {
        let mut out = [0.0];
        LocationModel::new(0).score(&[3.0], &[1.0], &Nuisance::new(), &mut out);
        assert_eq!(out[0], 2.0);
        IvModel::new(0, 1, vec![2]).unwrap().score(&[2.0, 1.0, 1.0], &[2.0], &Nuisance::new(), &mut out);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn plr_residual_identity() {
        let eta = Nuisance::new()
            .with("l", Arc::new(LinearPredictor::new(0.0, vec![1.5])))
            .with("m", Arc::new(LinearPredictor::new(0.0, vec![1.0])));
        // y = θ d + x with d = x + V and no outcome noise: ℓ = (θ+1)x, m = x.
        let (theta, x, v) = (0.5, 2.0, 0.7);
        let d = x + v;
        let y = theta * d + x;
        let mut out = [0.0];
        PlrModel::new(0, 1, vec![2]).score(&[y, d, x], &[theta], &eta, &mut out);
        assert!(out[0].abs() < 1e-15);
    }

    #[test]
    fn columns_borrow_when_contiguous() {
        let c = Columns::new(vec![2, 3, 4]);
        assert!(matches!(c.view(&[0.0, 1.0, 2.0, 3.0, 4.0]), Cow::Borrowed(_)));
        let c = Columns::new(vec![4, 2]);
        assert_eq!(c.view(&[0.0, 1.0, 2.0, 3.0, 4.0]).as_ref(), &[4.0, 2.0]);
    }

    #[test]
    fn config_resolution() {
        let fields = names(&["y", "d", "x1", "x2", "z1"]);
        let m = ModelConfig::plr().build(&fields).unwrap();
        assert_eq!(m.covariates(&[0.0, 0.0, 5.0, 6.0, 7.0]).as_ref(), &[5.0, 6.0]);
        let iv: ModelConfig = serde_json::from_str(r#"{"name":"iv"}"#).unwrap();
        assert_eq!(iv.build(&fields).unwrap().moment_dim(), 1);
        let bad: ModelConfig = serde_json::from_str(r#"{"name":"location","field":"w"}"#).unwrap();
        assert!(matches!(bad.build(&fields), Err(Error::MissingField(_))));
    }
}

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::projection::Population;
use crate::error::{Error, Result};
use crate::se_array::DgpSpec;

/// A vector of real functions of an observation record, evaluated together.
pub trait Functional: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, record: &[f64], out: &mut [f64]);
}

/// Wraps a scalar closure as a one-dimensional [`Functional`].
pub struct ScalarFn<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Functional for ScalarFn<F> {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, record: &[f64], out: &mut [f64]) {
        out[0] = (self.0)(record);
    }
}

pub type RecordFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// VC characteristics (A, v) of a function class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VcCharacteristics {
    pub a: f64,
    pub v: f64,
}

/// A finite family of scalar functions standing in for a function class,
/// with an envelope and optional VC characteristics.
#[derive(Clone)]
pub struct FunctionGrid {
    labels: Vec<String>,
    members: Vec<RecordFn>,
    offsets: Vec<f64>,
    envelope: RecordFn,
    vc: Option<VcCharacteristics>,
}

impl fmt::Debug for FunctionGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionGrid")
            .field("labels", &self.labels)
            .field("offsets", &self.offsets)
            .field("vc", &self.vc)
            .finish()
    }
}

impl FunctionGrid {
    pub fn new(labels: Vec<String>, members: Vec<RecordFn>, envelope: RecordFn) -> Result<Self> {
        if labels.len() != members.len() || members.is_empty() {
            return Err(Error::Domain("a grid needs one label per member and at least one member".into()));
        }
        let offsets = vec![0.0; members.len()];
        Ok(Self { labels, members, offsets, envelope, vc: None })
    }

    /// A single function with its envelope.
    pub fn singleton(label: impl Into<String>, f: RecordFn, envelope: RecordFn) -> Self {
        Self::new(vec![label.into()], vec![f], envelope).expect("one member")
    }

    /// Indicators x ↦ 1{x_field ≤ t}; envelope 1, VC characteristics (e, 1).
    pub fn thresholds(field: usize, thresholds: &[f64]) -> Result<Self> {
        let labels = thresholds.iter().map(|t| format!("1{{x<={t}}}")).collect();
        let members = thresholds
            .iter()
            .map(|&t| Arc::new(move |r: &[f64]| if r[field] <= t { 1.0 } else { 0.0 }) as RecordFn)
            .collect();
        Self::new(labels, members, Arc::new(|_: &[f64]| 1.0))?.with_vc(std::f64::consts::E, 1.0)
    }

    /// Linear maps x ↦ c·x_field; envelope max|c|·|x_field|.
    pub fn linear(field: usize, slopes: &[f64]) -> Result<Self> {
        let labels = slopes.iter().map(|c| format!("{c}*x")).collect();
        let members = slopes
            .iter()
            .map(|&c| Arc::new(move |r: &[f64]| c * r[field]) as RecordFn)
            .collect();
        let cmax = slopes.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        Self::new(labels, members, Arc::new(move |r: &[f64]| cmax * r[field].abs()))
    }

    pub fn with_vc(mut self, a: f64, v: f64) -> Result<Self> {
        if !(a >= std::f64::consts::E) || !(v >= 1.0) {
            return Err(Error::Domain(format!("VC characteristics need A ≥ e and v ≥ 1, got ({a}, {v})")));
        }
        self.vc = Some(VcCharacteristics { a, v });
        Ok(self)
    }

    pub fn with_envelope(mut self, envelope: RecordFn) -> Self {
        self.envelope = envelope;
        self
    }

    pub fn vc(&self) -> Option<VcCharacteristics> {
        self.vc
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn envelope(&self, record: &[f64]) -> f64 {
        (self.envelope)(record)
    }

    pub fn envelope_fn(&self) -> RecordFn {
        self.envelope.clone()
    }

    /// Subtracts the exact population means so that P f = 0 for every
    /// member. The envelope grows by max |P f| to stay valid.
    pub fn centered(&self, spec: &DgpSpec) -> Result<Self> {
        let pop = Population::exact(spec)?;
        let means = pop.expect(self);
        let mut out = self.clone();
        for (o, m) in out.offsets.iter_mut().zip(&means) {
            *o += m;
        }
        let shift = means.iter().fold(0.0f64, |a, m| a.max(m.abs()));
        let env = self.envelope.clone();
        out.envelope = Arc::new(move |r: &[f64]| env(r) + shift);
        Ok(out)
    }

    /// Largest |f(x)| − F(x) over the given records; ≤ 0 when the envelope
    /// holds.
    pub fn envelope_violation<'a>(&self, records: impl IntoIterator<Item = &'a [f64]>) -> f64 {
        let mut buf = vec![0.0; self.len()];
        let mut worst = f64::NEG_INFINITY;
        for r in records {
            self.eval(r, &mut buf);
            let env = self.envelope(r);
            for v in &buf {
                worst = worst.max(v.abs() - env);
            }
        }
        worst
    }
}

impl Functional for FunctionGrid {
    fn dim(&self) -> usize {
        self.members.len()
    }

    fn eval(&self, record: &[f64], out: &mut [f64]) {
        for ((o, f), c) in out.iter_mut().zip(&self.members).zip(&self.offsets) {
            *o = f(record) - c;
        }
    }
}

/// The envelope of a grid as a one-dimensional functional.
pub(crate) struct EnvelopeOf<'a>(pub &'a FunctionGrid);

impl Functional for EnvelopeOf<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, record: &[f64], out: &mut [f64]) {
        out[0] = self.0.envelope(record);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_grid_values() {
        let g = FunctionGrid::thresholds(0, &[-0.5, 0.5]).unwrap();
        let mut out = [0.0; 2];
        g.eval(&[0.0], &mut out);
        assert_eq!(out, [0.0, 1.0]);
        assert_eq!(g.vc().unwrap().v, 1.0);
        assert!(g.envelope_violation([[0.0].as_slice(), [3.0].as_slice()]) <= 0.0);
    }

    #[test]
    fn vc_domain() {
        let g = FunctionGrid::linear(0, &[1.0]).unwrap();
        assert!(g.clone().with_vc(2.0, 1.0).is_err());
        assert!(g.with_vc(3.0, 0.5).is_err());
    }
}

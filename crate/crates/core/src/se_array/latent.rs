use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lattice::{Mask, MultiIndex, Shape};
use super::rng::{self, tag};
use crate::error::{Error, Result};

/// Law of a single latent component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentDist {
    Constant { value: f64 },
    /// ±1 with equal probability.
    Rademacher,
    Finite { atoms: Vec<f64>, probs: Vec<f64> },
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
}

impl LatentDist {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn finite(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let d = Self::Finite { atoms, probs };
        d.validate()?;
        Ok(d)
    }

    /// Equal-weight atoms.
    pub fn uniform_atoms(atoms: Vec<f64>) -> Self {
        let p = 1.0 / atoms.len() as f64;
        let probs = vec![p; atoms.len()];
        Self::Finite { atoms, probs }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { value } if !value.is_finite() => {
                Err(Error::UnsupportedDistribution("non-finite constant".into()))
            }
            Self::Finite { atoms, probs } => {
                if atoms.is_empty() || atoms.len() != probs.len() {
                    return Err(Error::UnsupportedDistribution(
                        "finite support needs matching non-empty atoms and probs".into(),
                    ));
                }
                if probs.iter().any(|&p| !(p > 0.0)) || atoms.iter().any(|a| !a.is_finite()) {
                    return Err(Error::UnsupportedDistribution(
                        "finite support needs finite atoms with positive probabilities".into(),
                    ));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::UnsupportedDistribution(format!(
                        "probabilities sum to {total}, not 1"
                    )));
                }
                Ok(())
            }
            Self::Normal { mean, sd } if !(mean.is_finite() && *sd >= 0.0 && sd.is_finite()) => {
                Err(Error::UnsupportedDistribution(format!("normal({mean}, {sd})")))
            }
            Self::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low < high) => {
                Err(Error::UnsupportedDistribution(format!("uniform({low}, {high})")))
            }
            _ => Ok(()),
        }
    }

    /// Weighted atoms, or `None` for continuous laws.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Self::Constant { value } => Some(vec![(*value, 1.0)]),
            Self::Rademacher => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            Self::Finite { atoms, probs } => {
                Some(atoms.iter().copied().zip(probs.iter().copied()).collect())
            }
            Self::Normal { sd, mean } if *sd == 0.0 => Some(vec![(*mean, 1.0)]),
            Self::Normal { .. } | Self::Uniform { .. } => None,
        }
    }

    pub fn is_finite_support(&self) -> bool {
        self.support().is_some()
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Rademacher => 0.0,
            Self::Finite { atoms, probs } => atoms.iter().zip(probs).map(|(a, p)| a * p).sum(),
            Self::Normal { mean, .. } => *mean,
            Self::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::Rademacher => 1.0,
            Self::Finite { atoms, probs } => {
                let m = self.mean();
                atoms.iter().zip(probs).map(|(a, p)| p * (a - m).powi(2)).sum()
            }
            Self::Normal { sd, .. } => sd * sd,
            Self::Uniform { low, high } => (high - low).powi(2) / 12.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Finite { atoms, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, p) in atoms.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms.last().expect("validated non-empty")
            }
            Self::Normal { mean, sd } => {
                if *sd == 0.0 {
                    *mean
                } else {
                    Normal::new(*mean, *sd).expect("validated").sample(rng)
                }
            }
            Self::Uniform { low, high } => rng.random_range(*low..*high),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentComponent {
    pub name: String,
    pub dist: LatentDist,
}

impl LatentComponent {
    pub fn new(name: impl Into<String>, dist: LatentDist) -> Self {
        Self { name: name.into(), dist }
    }
}

/// Which latent components exist at each nonzero mask and how they are
/// distributed. Components at mask e form the vector U_{i⊙e}.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentLayout {
    order: usize,
    /// Indexed by mask bits; entry 0 is always empty.
    blocks: Vec<Vec<LatentComponent>>,
    offsets: Vec<usize>,
}

impl LatentLayout {
    pub fn new(order: usize, mut component_fn: impl FnMut(Mask) -> Vec<LatentComponent>) -> Result<Self> {
        let mut blocks = vec![Vec::new(); 1 << order];
        for e in Mask::all_nonzero(order) {
            let comps = component_fn(e);
            for c in &comps {
                c.dist.validate()?;
            }
            blocks[e.bits() as usize] = comps;
        }
        let mut layout = Self { order, blocks, offsets: Vec::new() };
        layout.recompute_offsets();
        Ok(layout)
    }

    fn recompute_offsets(&mut self) {
        let mut offsets = Vec::with_capacity(self.blocks.len() + 1);
        let mut acc = 0;
        for b in &self.blocks {
            offsets.push(acc);
            acc += b.len();
        }
        offsets.push(acc);
        self.offsets = offsets;
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn components(&self, e: Mask) -> &[LatentComponent] {
        &self.blocks[e.bits() as usize]
    }

    pub fn width(&self, e: Mask) -> usize {
        self.blocks[e.bits() as usize].len()
    }

    /// Total number of latent components at one cell.
    pub fn total_width(&self) -> usize {
        *self.offsets.last().expect("offsets populated")
    }

    pub fn range(&self, e: Mask) -> std::ops::Range<usize> {
        let b = e.bits() as usize;
        self.offsets[b]..self.offsets[b + 1]
    }

    /// Position of the named component at mask `e` inside a [`CellLatent`].
    pub fn position(&self, e: Mask, name: &str) -> Option<usize> {
        self.components(e)
            .iter()
            .position(|c| c.name == name)
            .map(|p| self.range(e).start + p)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|c| c.dist.is_finite_support())
    }

    /// Whether every component carried by the given masks has finite support.
    pub fn is_finite_on(&self, masks: &[Mask]) -> bool {
        masks
            .iter()
            .flat_map(|&e| self.components(e))
            .all(|c| c.dist.is_finite_support())
    }

    /// Replaces every component at `e` by a constant at its mean.
    pub fn force_constant(&mut self, e: Mask) {
        for c in &mut self.blocks[e.bits() as usize] {
            c.dist = LatentDist::constant(c.dist.mean());
        }
    }
}

/// All latent values feeding a single cell, laid out per [`LatentLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct CellLatent {
    pub(crate) values: Vec<f64>,
}

impl CellLatent {
    pub fn zeros(layout: &LatentLayout) -> Self {
        Self { values: vec![0.0; layout.total_width()] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn block<'a>(&'a self, layout: &LatentLayout, e: Mask) -> &'a [f64] {
        &self.values[layout.range(e)]
    }

    pub fn block_mut<'a>(&'a mut self, layout: &LatentLayout, e: Mask) -> &'a mut [f64] {
        &mut self.values[layout.range(e)]
    }
}

/// Realised latent factors U_{i⊙e} for every nonzero mask and every masked
/// index of a shape. Each entry is stored once and shared by all cells
/// mapping to it.
#[derive(Clone, Debug)]
pub struct LatentTable {
    shape: Shape,
    layout: Arc<LatentLayout>,
    /// Indexed by mask bits: |I_{N,e}| rows of `width(e)` values.
    entries: Vec<Vec<f64>>,
}

impl LatentTable {
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    /// Whether every latent law has finite support.
    pub fn is_finite_support(&self) -> bool {
        self.layout.is_finite()
    }

    /// U_{i⊙e} for a masked index (coordinates outside supp(e) ignored).
    pub fn entry(&self, e: Mask, idx: &MultiIndex) -> Result<&[f64]> {
        let missing = || Error::MissingLatent { mask: e.to_string(), index: idx.to_string() };
        if e.is_zero() || e.order() != self.shape.order() || idx.coords().len() != e.order() {
            return Err(missing());
        }
        for k in e.support() {
            let c = idx.coords()[k];
            if c == 0 || c > self.shape.dim(k) {
                return Err(missing());
            }
        }
        let w = self.layout.width(e);
        let pos = self.shape.masked_linear_index(e, idx) * w;
        self.entries[e.bits() as usize].get(pos..pos + w).ok_or_else(missing)
    }

    /// Writes the latent values at masks e' ≤ `upto` for cell `idx` into
    /// `out`, leaving other blocks untouched.
    pub fn fill_cell(&self, idx: &MultiIndex, upto: Mask, out: &mut CellLatent) -> Result<()> {
        for e in upto.submasks() {
            if e.is_zero() {
                continue;
            }
            let src = self.entry(e, idx)?;
            out.block_mut(&self.layout, e).copy_from_slice(src);
        }
        Ok(())
    }

    pub fn cell(&self, idx: &MultiIndex) -> Result<CellLatent> {
        let mut out = CellLatent::zeros(&self.layout);
        self.fill_cell(idx, Mask::full(self.shape.order()), &mut out)?;
        Ok(out)
    }

    /// Relabels dimension k by `perms[k]` (1-based): entry at i⊙e moves to
    /// π(i)⊙e.
    pub(crate) fn permuted(&self, perms: &[Vec<usize>]) -> LatentTable {
        let mut entries = self.entries.clone();
        for e in self.shape.masks() {
            let w = self.layout.width(e);
            if w == 0 {
                continue;
            }
            let src = &self.entries[e.bits() as usize];
            let dst = &mut entries[e.bits() as usize];
            for idx in self.shape.masked_indices(e) {
                let from = self.shape.masked_linear_index(e, &idx) * w;
                let moved = permute_index(&idx, perms);
                let to = self.shape.masked_linear_index(e, &moved) * w;
                dst[to..to + w].copy_from_slice(&src[from..from + w]);
            }
        }
        LatentTable { shape: self.shape.clone(), layout: self.layout.clone(), entries }
    }

    pub(crate) fn from_parts(shape: Shape, layout: Arc<LatentLayout>, entries: Vec<Vec<f64>>) -> Self {
        Self { shape, layout, entries }
    }
}

pub(crate) fn permute_index(idx: &MultiIndex, perms: &[Vec<usize>]) -> MultiIndex {
    MultiIndex(
        idx.coords()
            .iter()
            .zip(perms)
            .map(|(&c, p)| if c == 0 { 0 } else { p[c - 1] })
            .collect(),
    )
}

/// Draws every latent entry for `shape` from `layout`. Entry (e, i⊙e) uses
/// its own stream keyed by `(seed, e, i⊙e)`.
pub(crate) fn draw_table(shape: &Shape, layout: Arc<LatentLayout>, seed: u64) -> LatentTable {
    let mut entries = vec![Vec::new(); 1 << shape.order()];
    for e in shape.masks() {
        let comps = layout.components(e);
        if comps.is_empty() {
            continue;
        }
        let indices = shape.masked_indices(e);
        let block: Vec<f64> = indices
            .par_iter()
            .flat_map_iter(|idx| {
                let mut words = Vec::with_capacity(1 + idx.coords().len());
                words.push(e.bits() as u64);
                words.extend(idx.coords().iter().map(|&c| c as u64));
                let mut r = rng::stream(seed, tag::LATENT, &words);
                comps.iter().map(move |c| c.dist.sample(&mut r)).collect::<Vec<_>>()
            })
            .collect();
        entries[e.bits() as usize] = block;
    }
    LatentTable::from_parts(shape.clone(), layout, entries)
}

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::latent::{draw_table, CellLatent, LatentLayout, LatentTable};
use super::lattice::{Mask, Shape};
use super::sample::ClusteredSample;
use crate::error::{Error, Result};

/// The map τ from the latent values at a cell to an observation record.
///
/// Implementations must be deterministic in the latent inputs.
pub trait Composition: Send + Sync + fmt::Debug {
    /// Names of the record fields, in output order.
    fn fields(&self) -> &[String];

    fn compose(&self, latent: &CellLatent, out: &mut [f64]);
}

/// A data-generating process: shape, latent laws and composition map.
#[derive(Clone, Debug)]
pub struct DgpSpec {
    shape: Shape,
    layout: Arc<LatentLayout>,
    composition: Arc<dyn Composition>,
}

impl DgpSpec {
    pub fn new(shape: Shape, layout: LatentLayout, composition: Arc<dyn Composition>) -> Result<Self> {
        if layout.order() != shape.order() {
            return Err(Error::InvalidShape(format!(
                "layout has order {} but shape has {} dimensions",
                layout.order(),
                shape.order()
            )));
        }
        Ok(Self { shape, layout: Arc::new(layout), composition })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    pub fn composition(&self) -> &dyn Composition {
        self.composition.as_ref()
    }

    pub fn fields(&self) -> &[String] {
        self.composition.fields()
    }

    pub fn field_index(&self, name: &str) -> Result<usize> {
        self.fields()
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::MissingField(name.to_string()))
    }

    /// Same latent laws and τ on a different lattice of the same order.
    pub fn with_shape(&self, shape: Shape) -> Result<Self> {
        if shape.order() != self.shape.order() {
            return Err(Error::InvalidShape(format!(
                "cannot move an order-{} design to shape {shape}",
                self.shape.order()
            )));
        }
        Ok(Self { shape, layout: self.layout.clone(), composition: self.composition.clone() })
    }

    /// Forces every latent factor at the given masks to its mean.
    pub fn with_constant_masks(&self, masks: &[Mask]) -> Self {
        let mut layout = (*self.layout).clone();
        for &e in masks {
            layout.force_constant(e);
        }
        Self { shape: self.shape.clone(), layout: Arc::new(layout), composition: self.composition.clone() }
    }

    /// Keeps only the full-interaction factor random, which makes cells i.i.d.
    pub fn iid_degenerate(&self) -> Self {
        let full = Mask::full(self.shape.order());
        let masks: Vec<Mask> = self.shape.masks().into_iter().filter(|&e| e != full).collect();
        self.with_constant_masks(&masks)
    }

    pub fn compose(&self, latent: &CellLatent, out: &mut [f64]) {
        self.composition.compose(latent, out)
    }

    pub fn compose_record(&self, latent: &CellLatent) -> Vec<f64> {
        let mut out = vec![0.0; self.fields().len()];
        self.compose(latent, &mut out);
        out
    }

    pub(crate) fn layout_arc(&self) -> &Arc<LatentLayout> {
        &self.layout
    }
}

/// Draws the latent table of `spec`. Identical seeds give bit-identical
/// tables regardless of scheduling.
pub fn generate_latent(spec: &DgpSpec, seed: u64) -> Result<LatentTable> {
    for e in spec.shape().masks() {
        for c in spec.layout().components(e) {
            c.dist.validate()?;
        }
    }
    Ok(draw_table(spec.shape(), spec.layout_arc().clone(), seed))
}

/// Applies τ at every cell. The returned sample keeps the table attached.
pub fn materialize(table: &LatentTable, spec: &DgpSpec) -> Result<ClusteredSample> {
    if table.shape() != spec.shape() || table.layout() != spec.layout() {
        return Err(Error::MissingLatent {
            mask: "*".into(),
            index: format!("table for shape {} does not match the design", table.shape()),
        });
    }
    let shape = spec.shape();
    let width = spec.fields().len();
    let full = Mask::full(shape.order());
    let rows: Vec<Vec<f64>> = (0..shape.cell_count())
        .into_par_iter()
        .map(|lin| {
            let idx = shape.cell_at(lin);
            let mut latent = CellLatent::zeros(spec.layout());
            table.fill_cell(&idx, full, &mut latent)?;
            let mut row = vec![0.0; width];
            spec.compose(&latent, &mut row);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let values = rows.into_iter().flatten().collect();
    let sample = ClusteredSample::new(shape.clone(), spec.fields().to_vec(), values)?;
    Ok(sample.with_latent(table.clone()))
}

/// `generate_latent` followed by `materialize`.
pub fn simulate(spec: &DgpSpec, seed: u64) -> Result<ClusteredSample> {
    let table = generate_latent(spec, seed)?;
    materialize(&table, spec)
}

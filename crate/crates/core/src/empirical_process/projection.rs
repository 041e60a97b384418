use nalgebra::DMatrix;
use rayon::prelude::*;

use super::functional::Functional;
use crate::error::{Error, Result};
use crate::se_array::rng::{self, tag};
use crate::se_array::{CellLatent, ClusteredSample, DgpSpec, LatentLayout, LatentTable, Mask, MultiIndex};

/// Largest joint support enumerated in exact mode.
pub const MAX_ENUMERATION: usize = 1 << 24;

/// How conditional expectations over latent factors are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionMode {
    /// Enumerate the joint finite support with probability weights.
    Exact,
    /// Average over `draws` fresh draws from keyed streams under `seed`.
    MonteCarlo { draws: usize, seed: u64 },
}

/// Joint finite support of the components carried by a set of masks.
pub(crate) struct Support {
    positions: Vec<usize>,
    atoms: Vec<Vec<(f64, f64)>>,
    count: usize,
}

impl Support {
    pub(crate) fn of(layout: &LatentLayout, masks: &[Mask]) -> Result<Self> {
        let mut positions = Vec::new();
        let mut atoms = Vec::new();
        let mut count = 1usize;
        for &e in masks {
            let start = layout.range(e).start;
            for (j, c) in layout.components(e).iter().enumerate() {
                let s = c
                    .dist
                    .support()
                    .ok_or_else(|| Error::ContinuousSupport(format!("component `{}` at mask {e}", c.name)))?;
                count = count
                    .checked_mul(s.len())
                    .filter(|&n| n <= MAX_ENUMERATION)
                    .ok_or_else(|| Error::Domain(format!("joint support exceeds {MAX_ENUMERATION} points")))?;
                positions.push(start + j);
                atoms.push(s);
            }
        }
        Ok(Self { positions, atoms, count })
    }

    pub(crate) fn count(&self) -> usize {
        self.count
    }

    /// Writes assignment number `lin` into `latent` and returns its weight.
    pub(crate) fn assign(&self, mut lin: usize, latent: &mut CellLatent) -> f64 {
        let mut w = 1.0;
        for (pos, atoms) in self.positions.iter().zip(&self.atoms).rev() {
            let (a, p) = atoms[lin % atoms.len()];
            lin /= atoms.len();
            latent.values[*pos] = a;
            w *= p;
        }
        w
    }
}

/// Nonzero masks that are not sub-masks of `e`.
pub(crate) fn free_masks(e: Mask) -> Vec<Mask> {
    Mask::all_nonzero(e.order()).into_iter().filter(|m| !m.is_submask_of(e)).collect()
}

/// Nonzero sub-masks of `e`.
pub(crate) fn fixed_masks(e: Mask) -> Vec<Mask> {
    e.submasks().into_iter().filter(|m| !m.is_zero()).collect()
}

fn sample_masks(layout: &LatentLayout, masks: &[Mask], r: &mut rng::StreamRng, latent: &mut CellLatent) {
    for &e in masks {
        let start = layout.range(e).start;
        for (j, c) in layout.components(e).iter().enumerate() {
            latent.values[start + j] = c.dist.sample(r);
        }
    }
}

/// Computes P_e f from a cell's latent values at masks ≤ e.
pub(crate) struct Projector<'a> {
    spec: &'a DgpSpec,
    mode: ProjectionMode,
}

impl<'a> Projector<'a> {
    pub(crate) fn new(spec: &'a DgpSpec, mode: ProjectionMode) -> Self {
        Self { spec, mode }
    }

    /// E[f(X) | blocks ≤ e as given in `latent`]. `key` identifies the
    /// conditioning point for Monte Carlo streams.
    pub(crate) fn conditional(
        &self,
        f: &dyn Functional,
        latent: &CellLatent,
        e: Mask,
        key: &[u64],
    ) -> Result<Vec<f64>> {
        let layout = self.spec.layout();
        let free = free_masks(e);
        let mut out = vec![0.0; f.dim()];
        let mut buf = vec![0.0; f.dim()];
        let mut rec = vec![0.0; self.spec.fields().len()];
        let mut work = latent.clone();
        match self.mode {
            ProjectionMode::Exact => {
                let support = Support::of(layout, &free)?;
                for lin in 0..support.count() {
                    let w = support.assign(lin, &mut work);
                    self.spec.compose(&work, &mut rec);
                    f.eval(&rec, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += w * b;
                    }
                }
            }
            ProjectionMode::MonteCarlo { draws, seed } => {
                if draws == 0 {
                    return Err(Error::Domain("Monte Carlo projection needs at least one draw".into()));
                }
                let mut words = vec![e.bits() as u64];
                words.extend_from_slice(key);
                let mut r = rng::stream(seed, tag::PROJECTION, &words);
                for _ in 0..draws {
                    sample_masks(layout, &free, &mut r, &mut work);
                    self.spec.compose(&work, &mut rec);
                    f.eval(&rec, &mut buf);
                    for (o, b) in out.iter_mut().zip(&buf) {
                        *o += b;
                    }
                }
                let inv = 1.0 / draws as f64;
                out.iter_mut().for_each(|o| *o *= inv);
            }
        }
        Ok(out)
    }

    /// P_{e'} f for every e' ≤ e (zero mask included), keyed by mask bits.
    pub(crate) fn lattice_of_projections(
        &self,
        f: &dyn Functional,
        latent: &CellLatent,
        e: Mask,
        key: &MultiIndex,
    ) -> Result<Vec<(Mask, Vec<f64>)>> {
        e.submasks()
            .into_iter()
            .map(|m| {
                let k = masked_key(key, m);
                self.conditional(f, latent, m, &k).map(|p| (m, p))
            })
            .collect()
    }

    /// P_e f at every masked index of I_{N,e}, in masked row-major order.
    pub(crate) fn table(&self, f: &dyn Functional, table: &LatentTable, e: Mask) -> Result<Vec<Vec<f64>>> {
        let shape = table.shape();
        shape
            .masked_indices(e)
            .par_iter()
            .map(|idx| {
                let mut latent = CellLatent::zeros(self.spec.layout());
                table.fill_cell(idx, e, &mut latent)?;
                self.conditional(f, &latent, e, &masked_key(idx, e))
            })
            .collect()
    }
}

pub(crate) fn masked_key(idx: &MultiIndex, e: Mask) -> Vec<u64> {
    idx.masked(e).coords().iter().map(|&c| c as u64).collect()
}

fn checked_table<'s>(spec: &DgpSpec, sample: &'s ClusteredSample) -> Result<&'s LatentTable> {
    let table = sample.latent().ok_or(Error::NoLatent)?;
    if table.layout() != spec.layout() || table.shape() != spec.shape() {
        return Err(Error::MissingLatent {
            mask: "*".into(),
            index: "latent table does not match the design".into(),
        });
    }
    Ok(table)
}

fn check_cell(sample: &ClusteredSample, cell: &MultiIndex, e: Mask) -> Result<()> {
    if e.order() != sample.shape().order() {
        return Err(Error::InvalidMask(format!("mask {e} does not match shape {}", sample.shape())));
    }
    if !sample.shape().contains(cell) {
        return Err(Error::InvalidShape(format!("cell {cell} outside {}", sample.shape())));
    }
    Ok(())
}

/// P_e f(X_i) = E[f(X_i) | {U_{i⊙e'}}_{e'≤e}].
pub fn conditional_projection(
    f: &dyn Functional,
    spec: &DgpSpec,
    sample: &ClusteredSample,
    cell: &MultiIndex,
    e: Mask,
    mode: ProjectionMode,
) -> Result<Vec<f64>> {
    check_cell(sample, cell, e)?;
    let table = checked_table(spec, sample)?;
    let mut latent = CellLatent::zeros(spec.layout());
    table.fill_cell(cell, e, &mut latent)?;
    Projector::new(spec, mode).conditional(f, &latent, e, &masked_key(cell, e))
}

/// π_e f at one cell, computed twice.
#[derive(Clone, Debug, PartialEq)]
pub struct PiProjection {
    /// P_e f minus every lower π_{e'} f, built up from π_0 = P f.
    pub recursive: Vec<f64>,
    /// Σ_{e'≤e} (−1)^{|e|−|e'|} P_{e'} f.
    pub mobius: Vec<f64>,
}

impl PiProjection {
    pub fn discrepancy(&self) -> f64 {
        self.recursive
            .iter()
            .zip(&self.mobius)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

fn pi_from_lattice(projections: &[(Mask, Vec<f64>)], e: Mask) -> PiProjection {
    let dim = projections[0].1.len();
    let mut mobius = vec![0.0; dim];
    for (m, p) in projections {
        let sign = if (e.weight() - m.weight()) % 2 == 0 { 1.0 } else { -1.0 };
        for (o, v) in mobius.iter_mut().zip(p) {
            *o += sign * v;
        }
    }
    // Submasks come sorted by weight, so every proper sub-mask is settled
    // before the masks above it.
    let mut pis: Vec<(Mask, Vec<f64>)> = Vec::with_capacity(projections.len());
    for (m, p) in projections {
        let mut pi = p.clone();
        for (lower, lp) in &pis {
            if *lower != *m && lower.is_submask_of(*m) {
                for (o, v) in pi.iter_mut().zip(lp) {
                    *o -= v;
                }
            }
        }
        pis.push((*m, pi));
    }
    let recursive = pis.into_iter().find(|(m, _)| *m == e).expect("e is its own sub-mask").1;
    PiProjection { recursive, mobius }
}

/// π_e f at a cell by recursion and by Möbius inversion.
pub fn pi_projection(
    f: &dyn Functional,
    spec: &DgpSpec,
    sample: &ClusteredSample,
    cell: &MultiIndex,
    e: Mask,
    mode: ProjectionMode,
) -> Result<PiProjection> {
    check_cell(sample, cell, e)?;
    let table = checked_table(spec, sample)?;
    let mut latent = CellLatent::zeros(spec.layout());
    table.fill_cell(cell, e, &mut latent)?;
    let lattice = Projector::new(spec, mode).lattice_of_projections(f, &latent, e, cell)?;
    Ok(pi_from_lattice(&lattice, e))
}

/// Largest |average of π_e f| obtained by integrating out, one coordinate
/// ℓ ∈ supp(e) at a time, every factor U_{i⊙e'} with e' ≤ e and ℓ ∈
/// supp(e'), keeping the remaining factors of the cell fixed. Exact mode only.
pub fn pi_conditional_mean_residual(
    f: &dyn Functional,
    spec: &DgpSpec,
    sample: &ClusteredSample,
    cell: &MultiIndex,
    e: Mask,
) -> Result<f64> {
    check_cell(sample, cell, e)?;
    let table = checked_table(spec, sample)?;
    let mut base = CellLatent::zeros(spec.layout());
    table.fill_cell(cell, e, &mut base)?;
    let projector = Projector::new(spec, ProjectionMode::Exact);
    let mut worst = 0.0f64;
    for ell in e.support() {
        let varying: Vec<Mask> = fixed_masks(e).into_iter().filter(|m| m.contains(ell)).collect();
        let support = Support::of(spec.layout(), &varying)?;
        let mut acc = vec![0.0; f.dim()];
        let mut work = base.clone();
        for lin in 0..support.count() {
            let w = support.assign(lin, &mut work);
            let lattice = projector.lattice_of_projections(f, &work, e, cell)?;
            let pi = pi_from_lattice(&lattice, e).mobius;
            for (a, v) in acc.iter_mut().zip(&pi) {
                *a += w * v;
            }
        }
        worst = acc.iter().fold(worst, |m, v| m.max(v.abs()));
    }
    Ok(worst)
}

/// The law of a single cell's observation, as weighted records.
#[derive(Clone, Debug)]
pub struct Population {
    width: usize,
    records: Vec<f64>,
    weights: Vec<f64>,
}

impl Population {
    /// Enumerates every latent configuration of one cell.
    pub fn exact(spec: &DgpSpec) -> Result<Self> {
        let masks = Mask::all_nonzero(spec.shape().order());
        let support = Support::of(spec.layout(), &masks)?;
        let width = spec.fields().len();
        let chunks: Vec<(Vec<f64>, f64)> = (0..support.count())
            .into_par_iter()
            .map_init(
                || CellLatent::zeros(spec.layout()),
                |latent, lin| {
                    let w = support.assign(lin, latent);
                    (spec.compose_record(latent), w)
                },
            )
            .collect();
        let mut records = Vec::with_capacity(chunks.len() * width);
        let mut weights = Vec::with_capacity(chunks.len());
        for (r, w) in chunks {
            records.extend(r);
            weights.push(w);
        }
        Ok(Self { width, records, weights })
    }

    /// `draws` equally weighted single-cell draws.
    pub fn sampled(spec: &DgpSpec, draws: usize, seed: u64) -> Self {
        let masks = Mask::all_nonzero(spec.shape().order());
        let width = spec.fields().len();
        let mut records = Vec::with_capacity(draws * width);
        let mut latent = CellLatent::zeros(spec.layout());
        let mut r = rng::stream(seed, tag::POPULATION, &[]);
        for _ in 0..draws {
            sample_masks(spec.layout(), &masks, &mut r, &mut latent);
            records.extend(spec.compose_record(&latent));
        }
        Self { width, records, weights: vec![1.0 / draws as f64; draws] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// (record, probability) pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.records.chunks_exact(self.width.max(1)).zip(self.weights.iter().copied())
    }

    /// E f(X).
    pub fn expect(&self, f: &dyn Functional) -> Vec<f64> {
        let mut out = vec![0.0; f.dim()];
        let mut buf = vec![0.0; f.dim()];
        for (r, w) in self.iter() {
            f.eval(r, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += w * b;
            }
        }
        out
    }

    pub fn expect_fn(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.iter().map(|(r, w)| w * f(r)).sum()
    }
}

/// Mean and second moment of the random vector P_e f.
#[derive(Clone, Debug)]
pub struct ProjectionMoments {
    pub mean: Vec<f64>,
    /// E[(P_e f)(P_e f)'].
    pub second: DMatrix<f64>,
}

impl ProjectionMoments {
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = nalgebra::DVector::from_column_slice(&self.mean);
        &self.second - &m * m.transpose()
    }

    /// ‖P_e f_j‖_{P,2} for each coordinate j.
    pub fn l2_norms(&self) -> Vec<f64> {
        (0..self.mean.len()).map(|j| self.second[(j, j)].max(0.0).sqrt()).collect()
    }
}

/// Moments of P_e f over the law of the factors at masks ≤ e.
///
/// Exact mode enumerates both layers. Monte Carlo mode draws pairs of cells
/// sharing exactly the factors at masks ≤ e, which makes the cross product
/// an unbiased estimate of the second moment.
pub fn projection_moments(
    f: &dyn Functional,
    spec: &DgpSpec,
    e: Mask,
    mode: ProjectionMode,
) -> Result<ProjectionMoments> {
    let d = f.dim();
    let inner = fixed_masks(e);
    match mode {
        ProjectionMode::Exact => {
            let support = Support::of(spec.layout(), &inner)?;
            let projector = Projector::new(spec, mode);
            let parts: Vec<(f64, Vec<f64>)> = (0..support.count())
                .into_par_iter()
                .map(|lin| {
                    let mut latent = CellLatent::zeros(spec.layout());
                    let w = support.assign(lin, &mut latent);
                    projector.conditional(f, &latent, e, &[]).map(|p| (w, p))
                })
                .collect::<Result<_>>()?;
            let mut mean = vec![0.0; d];
            let mut second = DMatrix::zeros(d, d);
            for (w, p) in parts {
                for a in 0..d {
                    mean[a] += w * p[a];
                    for b in 0..d {
                        second[(a, b)] += w * p[a] * p[b];
                    }
                }
            }
            Ok(ProjectionMoments { mean, second })
        }
        ProjectionMode::MonteCarlo { draws, seed } => {
            if draws == 0 {
                return Err(Error::Domain("Monte Carlo moments need at least one draw".into()));
            }
            let free = free_masks(e);
            let layout = spec.layout();
            let mut r = rng::stream(seed, tag::PROJECTION, &[e.bits() as u64, u64::MAX]);
            let mut latent = CellLatent::zeros(layout);
            let mut x = vec![0.0; spec.fields().len()];
            let (mut fa, mut fb) = (vec![0.0; d], vec![0.0; d]);
            let mut mean = vec![0.0; d];
            let mut second = DMatrix::zeros(d, d);
            for _ in 0..draws {
                sample_masks(layout, &inner, &mut r, &mut latent);
                sample_masks(layout, &free, &mut r, &mut latent);
                spec.compose(&latent, &mut x);
                f.eval(&x, &mut fa);
                sample_masks(layout, &free, &mut r, &mut latent);
                spec.compose(&latent, &mut x);
                f.eval(&x, &mut fb);
                for a in 0..d {
                    mean[a] += 0.5 * (fa[a] + fb[a]);
                    for b in 0..d {
                        second[(a, b)] += 0.5 * (fa[a] * fb[b] + fb[a] * fa[b]);
                    }
                }
            }
            let inv = 1.0 / draws as f64;
            mean.iter_mut().for_each(|m| *m *= inv);
            second *= inv;
            Ok(ProjectionMoments { mean, second })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical_process::ScalarFn;
    use crate::se_array::{simulate, AdditiveDesign, LatentDist, ProductDesign, Shape};

    fn identity() -> ScalarFn<impl Fn(&[f64]) -> f64 + Send + Sync> {
        ScalarFn(|r: &[f64]| r[0])
    }

    fn m(f: &[u8]) -> Mask {
        Mask::from_flags(f).unwrap()
    }

    fn additive(n: usize) -> DgpSpec {
        AdditiveDesign::new(2, LatentDist::Rademacher).spec(Shape::square(2, n).unwrap()).unwrap()
    }

    #[test]
    fn full_mask_returns_the_observation() {
        let spec = additive(3);
        let s = simulate(&spec, 5).unwrap();
        for idx in s.shape().masked_indices(Mask::full(2)) {
            let p = conditional_projection(&identity(), &spec, &s, &idx, Mask::full(2), ProjectionMode::Exact).unwrap();
            assert_eq!(p[0], s.record_at(&idx)[0]);
        }
    }

    #[test]
    fn additive_row_projection_is_the_row_factor() {
        let spec = additive(3);
        let s = simulate(&spec, 6).unwrap();
        let t = s.latent().unwrap();
        let e = m(&[1, 0]);
        for idx in s.shape().masked_indices(Mask::full(2)) {
            let p = conditional_projection(&identity(), &spec, &s, &idx, e, ProjectionMode::Exact).unwrap();
            assert_eq!(p[0], t.entry(e, &idx).unwrap()[0]);
        }
    }

    #[test]
    fn product_row_projection_vanishes() {
        let spec = ProductDesign::new(2, LatentDist::Rademacher).spec(Shape::square(2, 3).unwrap()).unwrap();
        let s = simulate(&spec, 7).unwrap();
        for idx in s.shape().masked_indices(Mask::full(2)) {
            let p = conditional_projection(&identity(), &spec, &s, &idx, m(&[1, 0]), ProjectionMode::Exact).unwrap();
            assert_eq!(p[0], 0.0);
            let pi = pi_projection(&identity(), &spec, &s, &idx, Mask::full(2), ProjectionMode::Exact).unwrap();
            assert!((pi.mobius[0] - s.record_at(&idx)[0]).abs() < 1e-15);
            assert!(pi.discrepancy() < 1e-12);
        }
    }

    #[test]
    fn additive_interaction_pi_is_the_interaction_factor() {
        let spec = additive(2);
        let s = simulate(&spec, 8).unwrap();
        let t = s.latent().unwrap();
        for idx in s.shape().masked_indices(Mask::full(2)) {
            let pi = pi_projection(&identity(), &spec, &s, &idx, Mask::full(2), ProjectionMode::Exact).unwrap();
            assert!((pi.recursive[0] - t.entry(Mask::full(2), &idx).unwrap()[0]).abs() < 1e-12);
        }
        let no_interaction = spec.with_constant_masks(&[Mask::full(2)]);
        let s = simulate(&no_interaction, 8).unwrap();
        let idx = MultiIndex::new(vec![1, 2]);
        let pi = pi_projection(&identity(), &no_interaction, &s, &idx, Mask::full(2), ProjectionMode::Exact).unwrap();
        assert!(pi.recursive[0].abs() < 1e-12);
    }

    #[test]
    fn continuous_support_is_refused_in_exact_mode() {
        let spec = AdditiveDesign::new(2, LatentDist::Normal { mean: 0.0, sd: 1.0 })
            .spec(Shape::square(2, 2).unwrap())
            .unwrap();
        let s = simulate(&spec, 1).unwrap();
        let idx = MultiIndex::new(vec![1, 1]);
        let err = conditional_projection(&identity(), &spec, &s, &idx, m(&[1, 0]), ProjectionMode::Exact);
        assert!(matches!(err, Err(Error::ContinuousSupport(_))));
        let mc = ProjectionMode::MonteCarlo { draws: 20_000, seed: 3 };
        let p = conditional_projection(&identity(), &spec, &s, &idx, m(&[1, 0]), mc).unwrap();
        let u = s.latent().unwrap().entry(m(&[1, 0]), &idx).unwrap()[0];
        assert!((p[0] - u).abs() < 0.05);
    }

    #[test]
    fn missing_latent_table_is_an_error() {
        let spec = additive(2);
        let s = simulate(&spec, 1).unwrap().without_latent();
        let idx = MultiIndex::new(vec![1, 1]);
        assert!(matches!(
            conditional_projection(&identity(), &spec, &s, &idx, m(&[1, 0]), ProjectionMode::Exact),
            Err(Error::NoLatent)
        ));
    }

    #[test]
    fn population_moments() {
        let spec = additive(2);
        let pop = Population::exact(&spec).unwrap();
        assert_eq!(pop.len(), 8);
        assert!(pop.expect_fn(|r| r[0]).abs() < 1e-15);
        assert!((pop.expect_fn(|r| r[0] * r[0]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn projection_variances() {
        let spec = additive(2);
        let mo = projection_moments(&identity(), &spec, m(&[1, 0]), ProjectionMode::Exact).unwrap();
        assert!((mo.covariance()[(0, 0)] - 1.0).abs() < 1e-12);
        let mo = projection_moments(&identity(), &spec, Mask::full(2), ProjectionMode::Exact).unwrap();
        assert!((mo.second[(0, 0)] - 3.0).abs() < 1e-12);
        let mc = ProjectionMode::MonteCarlo { draws: 40_000, seed: 9 };
        let mo = projection_moments(&identity(), &spec, m(&[0, 1]), mc).unwrap();
        assert!((mo.covariance()[(0, 0)] - 1.0).abs() < 0.1);
    }

    #[test]
    fn pi_has_zero_conditional_mean() {
        let spec = ProductDesign::new(2, LatentDist::uniform_atoms(vec![-1.0, 0.5, 2.0]))
            .spec(Shape::square(2, 2).unwrap())
            .unwrap();
        let s = simulate(&spec, 4).unwrap();
        let f = ScalarFn(|r: &[f64]| (r[0] - 0.3).powi(2));
        let idx = MultiIndex::new(vec![2, 1]);
        for e in Mask::all_nonzero(2) {
            assert!(pi_conditional_mean_residual(&f, &spec, &s, &idx, e).unwrap() < 1e-10);
        }
    }
}

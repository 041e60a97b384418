use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions `(N_1, ..., N_K)` of a K-way array.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidShape("at least one dimension is required".into()));
        }
        if dims.len() > Mask::MAX_ORDER {
            return Err(Error::InvalidShape(format!(
                "at most {} dimensions are supported",
                Mask::MAX_ORDER
            )));
        }
        if let Some(k) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidShape(format!("dimension {} has size 0", k + 1)));
        }
        Ok(Self { dims })
    }

    /// A K-way shape with every dimension equal to `n`.
    pub fn square(order: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; order])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of clustering dimensions K.
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, k: usize) -> usize {
        self.dims[k]
    }

    /// Total number of cells N.
    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Smallest dimension n.
    pub fn min_dim(&self) -> usize {
        *self.dims.iter().min().expect("non-empty shape")
    }

    /// Largest dimension N̄.
    pub fn max_dim(&self) -> usize {
        *self.dims.iter().max().expect("non-empty shape")
    }

    /// All nonzero masks of this order.
    pub fn masks(&self) -> Vec<Mask> {
        Mask::all_nonzero(self.order())
    }

    /// |I_{N,e}| = product of N_k over supp(e); 1 for the zero mask.
    pub fn masked_size(&self, e: Mask) -> usize {
        e.support().iter().map(|&k| self.dims[k]).product()
    }

    /// Row-major position of `idx` within the lattice (all coordinates used).
    pub fn linear_index(&self, idx: &MultiIndex) -> usize {
        self.dims
            .iter()
            .zip(idx.coords())
            .fold(0, |acc, (&d, &c)| acc * d + (c - 1))
    }

    /// Row-major position of a masked index within I_{N,e}.
    pub fn masked_linear_index(&self, e: Mask, idx: &MultiIndex) -> usize {
        e.support()
            .iter()
            .fold(0, |acc, &k| acc * self.dims[k] + (idx.coords()[k] - 1))
    }

    /// Inverse of [`Shape::linear_index`].
    pub fn cell_at(&self, mut lin: usize) -> MultiIndex {
        let mut coords = vec![0; self.order()];
        for k in (0..self.order()).rev() {
            coords[k] = lin % self.dims[k] + 1;
            lin /= self.dims[k];
        }
        MultiIndex(coords)
    }

    /// I_{N,e} in row-major order over supp(e); coordinates outside the
    /// support are 0.
    pub fn masked_indices(&self, e: Mask) -> Vec<MultiIndex> {
        let support = e.support();
        let count = self.masked_size(e);
        let mut out = Vec::with_capacity(count);
        for mut lin in 0..count {
            let mut coords = vec![0; self.order()];
            for &k in support.iter().rev() {
                coords[k] = lin % self.dims[k] + 1;
                lin /= self.dims[k];
            }
            out.push(MultiIndex(coords));
        }
        out
    }

    pub fn contains(&self, idx: &MultiIndex) -> bool {
        idx.coords().len() == self.order()
            && idx
                .coords()
                .iter()
                .zip(&self.dims)
                .all(|(&c, &d)| c >= 1 && c <= d)
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = Error;
    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.dims
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let dims = s
            .split(|c| c == ',' || c == 'x')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidShape(format!("cannot parse `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims)
    }
}

/// Every cell of the lattice in row-major order.
pub fn enumerate_cells(shape: &Shape) -> Vec<MultiIndex> {
    (0..shape.cell_count()).map(|l| shape.cell_at(l)).collect()
}

/// A 0/1 vector e ∈ {0,1}^K, stored as a bitset (bit k is coordinate k).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mask {
    bits: u32,
    order: u8,
}

impl Mask {
    pub const MAX_ORDER: usize = 16;

    pub fn new(bits: u32, order: usize) -> Result<Self> {
        if order == 0 || order > Self::MAX_ORDER {
            return Err(Error::InvalidMask(format!("order {order} out of range")));
        }
        if bits >> order != 0 {
            return Err(Error::InvalidMask(format!("bits {bits:#b} exceed order {order}")));
        }
        Ok(Self { bits, order: order as u8 })
    }

    pub fn from_flags(flags: &[u8]) -> Result<Self> {
        let mut bits = 0;
        for (k, &f) in flags.iter().enumerate() {
            match f {
                0 => {}
                1 => bits |= 1 << k,
                _ => return Err(Error::InvalidMask(format!("entry {f} is not 0 or 1"))),
            }
        }
        Self::new(bits, flags.len())
    }

    pub fn zero(order: usize) -> Self {
        Self { bits: 0, order: order as u8 }
    }

    pub fn full(order: usize) -> Self {
        Self { bits: (1u32 << order) - 1, order: order as u8 }
    }

    /// e_k: the unit mask selecting dimension `k` (0-based).
    pub fn unit(order: usize, k: usize) -> Self {
        Self { bits: 1 << k, order: order as u8 }
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn order(self) -> usize {
        self.order as usize
    }

    /// ‖e‖₀.
    pub fn weight(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_zero(self) -> bool {
        self.bits == 0
    }

    pub fn contains(self, k: usize) -> bool {
        self.bits >> k & 1 == 1
    }

    /// supp(e), ascending.
    pub fn support(self) -> Vec<usize> {
        (0..self.order()).filter(|&k| self.contains(k)).collect()
    }

    pub fn flags(self) -> Vec<u8> {
        (0..self.order()).map(|k| self.contains(k) as u8).collect()
    }

    /// e' ≤ e componentwise.
    pub fn is_submask_of(self, other: Mask) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn without(self, k: usize) -> Self {
        Self { bits: self.bits & !(1 << k), order: self.order }
    }

    /// All e' ≤ e, including 0 and e itself, in increasing bit order.
    pub fn submasks(self) -> Vec<Mask> {
        let mut out = Vec::with_capacity(1 << self.weight());
        let mut sub = 0u32;
        loop {
            out.push(Self { bits: sub, order: self.order });
            if sub == self.bits {
                break;
            }
            sub = (sub.wrapping_sub(self.bits)) & self.bits;
        }
        out.sort();
        out
    }

    /// Nonzero masks of the given order, grouped by weight (ℰ_1, ℰ_2, ...).
    pub fn all_nonzero(order: usize) -> Vec<Mask> {
        let mut out: Vec<Mask> = (1..(1u32 << order))
            .map(|bits| Self { bits, order: order as u8 })
            .collect();
        out.sort_by_key(|m| (m.weight(), m.bits));
        out
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.flags().iter().map(|b| b.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl FromStr for Mask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        let flags = if trimmed.contains(',') {
            trimmed
                .split(',')
                .map(|p| p.trim().parse::<u8>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::InvalidMask(format!("cannot parse `{s}`")))?
        } else {
            trimmed
                .chars()
                .map(|c| c.to_digit(10).map(|d| d as u8))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::InvalidMask(format!("cannot parse `{s}`")))?
        };
        Self::from_flags(&flags)
    }
}

impl Serialize for Mask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.flags().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let flags = Vec::<u8>::deserialize(d)?;
        Mask::from_flags(&flags).map_err(serde::de::Error::custom)
    }
}

/// A 1-based K-tuple index. Masked indices i⊙e carry 0 outside supp(e).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub(crate) Vec<usize>);

impl MultiIndex {
    pub fn new(coords: Vec<usize>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }

    /// Hadamard product i⊙e.
    pub fn masked(&self, e: Mask) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .enumerate()
                .map(|(k, &c)| if e.contains(k) { c } else { 0 })
                .collect(),
        )
    }

    /// The diagonal index (t, ..., t)⊙e.
    pub fn diagonal(order: usize, t: usize, e: Mask) -> MultiIndex {
        MultiIndex((0..order).map(|k| if e.contains(k) { t } else { 0 }).collect())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(c: &[usize]) -> MultiIndex {
        MultiIndex::new(c.to_vec())
    }

    #[test]
    fn enumerate_small_lattices() {
        let s = Shape::new(vec![2, 2]).unwrap();
        assert_eq!(
            enumerate_cells(&s),
            vec![idx(&[1, 1]), idx(&[1, 2]), idx(&[2, 1]), idx(&[2, 2])]
        );
        let s = Shape::new(vec![3]).unwrap();
        assert_eq!(enumerate_cells(&s), vec![idx(&[1]), idx(&[2]), idx(&[3])]);
        let s = Shape::new(vec![2, 1, 2]).unwrap();
        let cells = enumerate_cells(&s);
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.coords()[1] == 1));
    }

    #[test]
    fn shape_summaries() {
        let s = Shape::new(vec![4, 3, 2]).unwrap();
        assert_eq!(s.cell_count(), 24);
        assert_eq!(s.min_dim(), 2);
        assert_eq!(s.max_dim(), 4);
        assert_eq!(s.masked_size(Mask::from_flags(&[1, 0, 1]).unwrap()), 8);
        assert!(Shape::new(vec![]).is_err());
        assert!(Shape::new(vec![3, 0]).is_err());
        assert_eq!("4x3,2".parse::<Shape>().unwrap(), s);
    }

    #[test]
    fn linear_index_roundtrip() {
        let s = Shape::new(vec![3, 4, 2]).unwrap();
        for (l, c) in enumerate_cells(&s).iter().enumerate() {
            assert_eq!(s.linear_index(c), l);
        }
    }

    #[test]
    fn masked_indices_are_distinct_and_counted() {
        let s = Shape::new(vec![3, 4, 2]).unwrap();
        for e in s.masks() {
            let idx = s.masked_indices(e);
            assert_eq!(idx.len(), s.masked_size(e));
            for (l, i) in idx.iter().enumerate() {
                assert_eq!(s.masked_linear_index(e, i), l);
                assert_eq!(i.masked(e), *i);
            }
        }
    }

    #[test]
    fn mask_algebra() {
        let e = Mask::from_flags(&[1, 0, 1]).unwrap();
        assert_eq!(e.weight(), 2);
        assert_eq!(e.support(), vec![0, 2]);
        let subs = e.submasks();
        assert_eq!(subs.len(), 4);
        assert!(subs.iter().all(|s| s.is_submask_of(e)));
        assert_eq!(Mask::all_nonzero(3).len(), 7);
        assert_eq!(e.to_string(), "(1,0,1)");
        assert_eq!("(1,0,1)".parse::<Mask>().unwrap(), e);
        assert_eq!("101".parse::<Mask>().unwrap(), e);
        assert!(Mask::from_flags(&[2]).is_err());
        let m = idx(&[3, 2, 4]).masked(e);
        assert_eq!(m, idx(&[3, 0, 4]));
    }
}

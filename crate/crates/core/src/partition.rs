//! Transversal partitions of masked index sets I_{N,e}.
//!
//! A group is transversal when any two of its members differ in every
//! coordinate of supp(e). Under the latent-factor representation the
//! projected summands inside such a group are i.i.d.

use std::collections::HashSet;
use std::io::Write;

use crate::error::{Error, Result};
use crate::se_array::{Mask, MultiIndex, Shape};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransversalPartition {
    pub shape: Shape,
    pub mask: Mask,
    pub groups: Vec<Vec<MultiIndex>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PartitionReport {
    pub covers: bool,
    pub disjoint: bool,
    pub transversal: bool,
    pub group_size_ok: bool,
}

impl PartitionReport {
    pub fn all_ok(&self) -> bool {
        self.covers && self.disjoint && self.transversal && self.group_size_ok
    }
}

/// Builds the cyclic-shift partition of I_{N,e}.
///
/// The supported coordinates are ordered by non-increasing size (ties keep
/// their original order). The smallest one runs over t ∈ [N_min]; each
/// other coordinate j takes φ_j(t, g_j) = ((t + g_j − 2) mod N_j) + 1 for a
/// group label g_j ∈ [N_j]. Groups have size N_min = min_{k∈supp(e)} N_k.
pub fn build_transversal_partition(shape: &Shape, e: Mask) -> Result<TransversalPartition> {
    if e.order() != shape.order() {
        return Err(Error::InvalidMask(format!("mask {e} does not match shape {shape}")));
    }
    if e.is_zero() {
        return Err(Error::InvalidMask("the zero mask has no transversal partition".into()));
    }
    let mut support = e.support();
    support.sort_by(|&a, &b| shape.dim(b).cmp(&shape.dim(a)));
    let (&smallest, labelled) = support.split_last().expect("non-empty support");
    let group_size = shape.dim(smallest);
    let label_dims: Vec<usize> = labelled.iter().map(|&k| shape.dim(k)).collect();
    let group_count: usize = label_dims.iter().product();

    let mut groups = Vec::with_capacity(group_count);
    let mut labels = vec![1usize; labelled.len()];
    for _ in 0..group_count {
        let group = (1..=group_size)
            .map(|t| {
                let mut coords = vec![0; shape.order()];
                coords[smallest] = t;
                for ((&k, &g), &nj) in labelled.iter().zip(&labels).zip(&label_dims) {
                    coords[k] = (t + g - 2) % nj + 1;
                }
                MultiIndex::new(coords)
            })
            .collect();
        groups.push(group);
        // Odometer over labels, last label fastest.
        for j in (0..labels.len()).rev() {
            labels[j] += 1;
            if labels[j] <= label_dims[j] {
                break;
            }
            labels[j] = 1;
        }
    }
    Ok(TransversalPartition { shape: shape.clone(), mask: e, groups })
}

/// Exhaustively checks the partition invariants without reference to how the
/// partition was built.
pub fn verify_partition(p: &TransversalPartition) -> PartitionReport {
    let support = p.mask.support();
    let expected: HashSet<MultiIndex> = p.shape.masked_indices(p.mask).into_iter().collect();
    let expected_size = support.iter().map(|&k| p.shape.dim(k)).min().unwrap_or(0);

    let mut seen = HashSet::new();
    let mut disjoint = true;
    let mut in_range = true;
    for idx in p.groups.iter().flatten() {
        if !seen.insert(idx.clone()) {
            disjoint = false;
        }
        if !expected.contains(idx) {
            in_range = false;
        }
    }
    let covers = in_range && seen.len() == expected.len();

    let transversal = p.groups.iter().all(|g| {
        g.iter().enumerate().all(|(a, x)| {
            g[a + 1..]
                .iter()
                .all(|y| support.iter().all(|&k| x.coords()[k] != y.coords()[k]))
        })
    });
    let group_size_ok = p.groups.iter().all(|g| g.len() == expected_size);
    PartitionReport { covers, disjoint, transversal, group_size_ok }
}

/// CSV rows `group_id, i_1, ..., i_K` (group ids from 1).
pub fn write_partition_csv<W: Write>(p: &TransversalPartition, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["group_id".to_string()];
    header.extend((1..=p.shape.order()).map(|k| format!("i_{k}")));
    wtr.write_record(&header)?;
    for (g, group) in p.groups.iter().enumerate() {
        for idx in group {
            let mut row = vec![(g + 1).to_string()];
            row.extend(idx.coords().iter().map(|c| c.to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(c: &[usize]) -> MultiIndex {
        MultiIndex::new(c.to_vec())
    }

    fn mask(f: &[u8]) -> Mask {
        Mask::from_flags(f).unwrap()
    }

    #[test]
    fn one_dimensional_is_a_single_group() {
        let s = Shape::new(vec![3]).unwrap();
        let p = build_transversal_partition(&s, mask(&[1])).unwrap();
        assert_eq!(p.groups, vec![vec![idx(&[1]), idx(&[2]), idx(&[3])]]);
    }

    #[test]
    fn two_by_two() {
        let s = Shape::new(vec![2, 2]).unwrap();
        let p = build_transversal_partition(&s, mask(&[1, 1])).unwrap();
        assert_eq!(
            p.groups,
            vec![vec![idx(&[1, 1]), idx(&[2, 2])], vec![idx(&[2, 1]), idx(&[1, 2])]]
        );
    }

    #[test]
    fn three_by_two() {
        let s = Shape::new(vec![3, 2]).unwrap();
        let p = build_transversal_partition(&s, mask(&[1, 1])).unwrap();
        assert_eq!(
            p.groups,
            vec![
                vec![idx(&[1, 1]), idx(&[2, 2])],
                vec![idx(&[2, 1]), idx(&[3, 2])],
                vec![idx(&[3, 1]), idx(&[1, 2])],
            ]
        );
        assert!(verify_partition(&p).all_ok());
    }

    #[test]
    fn smaller_first_dimension_is_reordered() {
        // (2,3): dimension 2 is larger, so it carries the group labels.
        let s = Shape::new(vec![2, 3]).unwrap();
        let p = build_transversal_partition(&s, mask(&[1, 1])).unwrap();
        assert_eq!(p.groups.len(), 3);
        assert!(verify_partition(&p).all_ok());
        assert_eq!(p.groups[0], vec![idx(&[1, 1]), idx(&[2, 2])]);
    }

    #[test]
    fn three_way_full_mask() {
        let s = Shape::new(vec![4, 3, 2]).unwrap();
        let p = build_transversal_partition(&s, mask(&[1, 1, 1])).unwrap();
        assert_eq!(p.groups.len(), 12);
        assert!(verify_partition(&p).all_ok());
    }

    #[test]
    fn sub_mask_uses_masked_coordinates() {
        let s = Shape::new(vec![4, 3, 2]).unwrap();
        let p = build_transversal_partition(&s, mask(&[1, 0, 1])).unwrap();
        assert_eq!(p.groups.len(), 4);
        assert!(p.groups.iter().flatten().all(|i| i.coords()[1] == 0));
        assert!(verify_partition(&p).all_ok());
    }

    #[test]
    fn zero_mask_is_rejected() {
        let s = Shape::new(vec![2, 2]).unwrap();
        assert!(build_transversal_partition(&s, Mask::zero(2)).is_err());
    }

    #[test]
    fn injected_faults_are_detected() {
        let s = Shape::new(vec![2, 2]).unwrap();
        let mut p = build_transversal_partition(&s, mask(&[1, 1])).unwrap();
        p.groups[1][0] = idx(&[1, 1]);
        let r = verify_partition(&p);
        assert!(!r.covers || !r.disjoint);

        let bad = TransversalPartition {
            shape: s,
            mask: mask(&[1, 1]),
            groups: vec![vec![idx(&[1, 1]), idx(&[1, 2])], vec![idx(&[2, 1]), idx(&[2, 2])]],
        };
        let r = verify_partition(&bad);
        assert!(r.covers && r.disjoint && r.group_size_ok);
        assert!(!r.transversal);
    }

    #[test]
    fn csv_rows() {
        let s = Shape::new(vec![2, 2]).unwrap();
        let p = build_transversal_partition(&s, mask(&[1, 1])).unwrap();
        let mut buf = Vec::new();
        write_partition_csv(&p, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "group_id,i_1,i_2\n1,1,1\n1,2,2\n2,2,1\n2,1,2\n"
        );
    }
}

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Predictor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub max_leaves: usize,
    #[serde(default = "TreeSpec::default_min_leaf")]
    pub min_leaf: usize,
}

impl TreeSpec {
    fn default_min_leaf() -> usize {
        5
    }

    pub fn new(max_leaves: usize, min_leaf: usize) -> Self {
        Self { max_leaves, min_leaf }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Node {
    Leaf { value: f64, count: usize },
    /// Rows with x[feature] ≤ threshold go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A regression tree with axis-aligned threshold splits and constant leaves.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeFit {
    pub nodes: Vec<Node>,
    pub feature_count: usize,
}

impl TreeFit {
    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Index of the leaf node reached by `x`.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

impl Predictor for TreeFit {
    fn predict(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_of(x)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!("leaf_of stops at leaves"),
        }
    }
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn sse(y: &[f64], rows: &[usize]) -> f64 {
    let n = rows.len() as f64;
    let m = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
    rows.iter().map(|&i| (y[i] - m).powi(2)).sum()
}

/// Best variance-reducing split of `rows`, scanning features in order and
/// thresholds at midpoints between distinct sorted values.
fn best_split(x: &DMatrix<f64>, y: &[f64], rows: &[usize], min_leaf: usize) -> Option<Candidate> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = rows.iter().map(|&i| y[i]).sum();
    let parent = sse(y, rows);
    let tol = 1e-12 * (1.0 + parent);
    let mut best: Option<Candidate> = None;
    let mut order = rows.to_vec();
    for j in 0..x.ncols() {
        order.sort_by(|&a, &b| x[(a, j)].total_cmp(&x[(b, j)]).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        let total_sq: f64 = rows.iter().map(|&i| y[i] * y[i]).sum();
        for (k, &i) in order.iter().enumerate().take(n - 1) {
            left_sum += y[i];
            left_sq += y[i] * y[i];
            let nl = k + 1;
            let nr = n - nl;
            let (xa, xb) = (x[(i, j)], x[(order[k + 1], j)]);
            if nl < min_leaf || nr < min_leaf || xa == xb {
                continue;
            }
            let right_sum = total - left_sum;
            let left_sse = left_sq - left_sum * left_sum / nl as f64;
            let right_sse = (total_sq - left_sq) - right_sum * right_sum / nr as f64;
            let gain = parent - left_sse - right_sse;
            if gain > tol && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Candidate { gain, feature: j, threshold: 0.5 * (xa + xb) });
            }
        }
    }
    best
}

/// Best-first greedy growth: repeatedly split the leaf with the largest
/// variance reduction until `max_leaves` leaves or no admissible split.
pub fn fit_tree(spec: &TreeSpec, x: &DMatrix<f64>, y: &[f64]) -> Result<TreeFit> {
    if spec.max_leaves == 0 {
        return Err(Error::Domain("a tree needs at least one leaf".into()));
    }
    if x.nrows() != y.len() || y.is_empty() {
        return Err(Error::InvalidShape(format!("{} feature rows for {} targets", x.nrows(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite learner input".into()));
    }
    let min_leaf = spec.min_leaf.max(1);
    let mean = |rows: &[usize]| rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    let all: Vec<usize> = (0..y.len()).collect();
    let mut nodes = vec![Node::Leaf { value: mean(&all), count: all.len() }];
    // Open leaves: (node index, rows, best split).
    let mut open = vec![(0usize, all.clone(), best_split(x, y, &all, min_leaf))];
    let mut leaves = 1;
    while leaves < spec.max_leaves {
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(k, (_, _, c))| c.as_ref().map(|c| (k, c.gain)))
            .fold(None, |acc: Option<(usize, f64)>, (k, g)| match acc {
                Some((_, bg)) if bg >= g => acc,
                _ => Some((k, g)),
            });
        let Some((k, _)) = pick else { break };
        let (node, rows, cand) = open.swap_remove(k);
        let cand = cand.expect("picked leaves have a split");
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| x[(i, cand.feature)] <= cand.threshold);
        let left = nodes.len();
        nodes.push(Node::Leaf { value: mean(&l_rows), count: l_rows.len() });
        nodes.push(Node::Leaf { value: mean(&r_rows), count: r_rows.len() });
        nodes[node] = Node::Split { feature: cand.feature, threshold: cand.threshold, left, right: left + 1 };
        let l_best = best_split(x, y, &l_rows, min_leaf);
        let r_best = best_split(x, y, &r_rows, min_leaf);
        open.push((left, l_rows, l_best));
        open.push((left + 1, r_rows, r_best));
        open.sort_by_key(|o| o.0);
        leaves += 1;
    }
    Ok(TreeFit { nodes, feature_count: x.ncols() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_targets_give_one_leaf() {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let t = fit_tree(&TreeSpec::new(4, 1), &x, &[2.0; 4]).unwrap();
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.predict(&[10.0]), 2.0);
    }

    #[test]
    fn one_leaf_is_the_grand_mean() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let t = fit_tree(&TreeSpec::new(1, 1), &x, &[1.0, 2.0, 6.0]).unwrap();
        assert_eq!(t.predict(&[0.0]), 3.0);
    }

    #[test]
    fn step_function_is_recovered() {
        let xs = [0.1, 0.4, 0.2, 0.9, 0.7, 0.8, 0.3, 0.6];
        let ys: Vec<f64> = xs.iter().map(|&v| if v < 0.5 { -1.0 } else { 3.0 }).collect();
        let x = DMatrix::from_column_slice(8, 1, &xs);
        let t = fit_tree(&TreeSpec::new(2, 1), &x, &ys).unwrap();
        assert_eq!(t.leaf_count(), 2);
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert!((threshold - 0.5).abs() < 1e-12),
            n => panic!("expected a split, got {n:?}"),
        }
        assert_eq!(t.predict(&[0.2]), -1.0);
        assert_eq!(t.predict(&[0.75]), 3.0);
    }

    #[test]
    fn leaves_predict_region_means() {
        let x = DMatrix::from_row_slice(8, 2, &[
            0.0, 1.0, 1.0, 0.0, 2.0, 1.0, 3.0, 0.0, 4.0, 1.0, 5.0, 0.0, 6.0, 1.0, 7.0, 0.0,
        ]);
        let y = [1.0, 2.0, 1.5, 4.0, 8.0, 7.0, 9.5, 6.0];
        let t = fit_tree(&TreeSpec::new(3, 2), &x, &y).unwrap();
        for leaf in 0..t.nodes.len() {
            if let Node::Leaf { value, count } = t.nodes[leaf] {
                let rows: Vec<usize> = (0..8).filter(|&i| t.leaf_of(&[x[(i, 0)], x[(i, 1)]]) == leaf).collect();
                assert_eq!(rows.len(), count);
                let m = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
                assert_eq!(m, value);
                assert!(count >= 2);
            }
        }
    }
}

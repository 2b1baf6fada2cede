//! Greedy binary regression tree over two-dimensional labels.
//!
//! A split is scored by the reduction in summed squared deviation of both
//! label columns. Candidate thresholds are midpoints between consecutive
//! distinct feature values. Scores within [`GAIN_TIE_TOLERANCE`] (relative to
//! the node's squared deviation) count as ties and go to the lowest feature
//! index, then the lowest threshold.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub const GAIN_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature_index: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: [f64; 2],
        count: usize,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> Vec<(&[f64; 2], usize)> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                TreeNode::Leaf { value, count } => out.push((value, *count)),
                TreeNode::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    /// Largest feature index referenced by any split.
    fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Internal { feature_index, left, right, .. } => {
                [Some(*feature_index), left.max_feature(), right.max_feature()].into_iter().flatten().max()
            }
        }
    }

    fn route(&self, row: impl Fn(usize) -> f64) -> [f64; 2] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Internal { feature_index, threshold, left, right } => {
                    node = if row(*feature_index) <= *threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: None, min_samples_leaf: 1, min_samples_split: 2 }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::InvalidArgument("min_samples_split must be at least 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::InvalidArgument("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Fitter<'x, 'y, 'c> {
    x: ArrayView2<'x, f64>,
    y: ArrayView2<'y, f64>,
    config: &'c TreeConfig,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

impl Fitter<'_, '_, '_> {
    fn leaf(&self, rows: &[usize]) -> TreeNode {
        let n = rows.len() as f64;
        let (sx, sy) = rows.iter().fold((0.0, 0.0), |(sx, sy), &r| (sx + self.y[[r, 0]], sy + self.y[[r, 1]]));
        TreeNode::Leaf { value: [sx / n, sy / n], count: rows.len() }
    }

    fn pure(&self, rows: &[usize]) -> bool {
        let first = (self.y[[rows[0], 0]], self.y[[rows[0], 1]]);
        rows.iter().all(|&r| (self.y[[r, 0]], self.y[[r, 1]]) == first)
    }

    fn best_split(&self, rows: &[usize]) -> Option<Candidate> {
        let n = rows.len();
        let min_leaf = self.config.min_samples_leaf;
        if n < 2 * min_leaf {
            return None;
        }
        let nf = n as f64;
        let (mx, my) = rows.iter().fold((0.0, 0.0), |(a, b), &r| (a + self.y[[r, 0]], b + self.y[[r, 1]]));
        let (mx, my) = (mx / nf, my / nf);
        let centered: Vec<[f64; 2]> = rows.iter().map(|&r| [self.y[[r, 0]] - mx, self.y[[r, 1]] - my]).collect();
        let total: f64 = centered.iter().map(|c| c[0] * c[0] + c[1] * c[1]).sum();
        let tol = GAIN_TIE_TOLERANCE * (1.0 + total);

        let mut best: Option<Candidate> = None;
        let mut order: Vec<usize> = (0..n).collect();
        for f in 0..self.x.ncols() {
            let value = |i: usize| self.x[[rows[i], f]];
            order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
            let (mut s0, mut s1) = (0.0, 0.0);
            for k in 1..n {
                let c = centered[order[k - 1]];
                s0 += c[0];
                s1 += c[1];
                let (a, b) = (value(order[k - 1]), value(order[k]));
                if k < min_leaf || n - k < min_leaf || a == b {
                    continue;
                }
                // with centered labels, left and right sums are negatives
                let kf = k as f64;
                let gain = (s0 * s0 + s1 * s1) * (1.0 / kf + 1.0 / (nf - kf));
                if best.is_none_or(|bc| gain > bc.gain + tol) {
                    best = Some(Candidate { feature: f, threshold: midpoint(a, b), gain });
                }
            }
        }
        best
    }

    fn grow(&self, rows: &mut [usize], depth: usize) -> TreeNode {
        let stop = rows.len() < self.config.min_samples_split
            || self.config.max_depth.is_some_and(|d| depth >= d)
            || self.pure(rows);
        let split = if stop { None } else { self.best_split(rows) };
        let Some(split) = split else {
            return self.leaf(rows);
        };
        let f = split.feature;
        rows.sort_by_key(|&r| self.x[[r, f]] > split.threshold);
        let mid = rows.partition_point(|&r| self.x[[r, f]] <= split.threshold);
        let (l, r) = rows.split_at_mut(mid);
        l.sort_unstable();
        r.sort_unstable();
        TreeNode::Internal {
            feature_index: f,
            threshold: split.threshold,
            left: Box::new(self.grow(l, depth + 1)),
            right: Box::new(self.grow(r, depth + 1)),
        }
    }
}

/// Fit a tree to `features` (n × d) and `labels` (n × 2).
pub fn fit_tree(features: ArrayView2<f64>, labels: ArrayView2<f64>, config: &TreeConfig) -> Result<TreeNode> {
    config.validate()?;
    let n = features.nrows();
    if n == 0 {
        return Err(Error::Empty("tree training set"));
    }
    if labels.dim() != (n, 2) {
        return Err(Error::shape(format!("({n}, 2) labels"), format!("{:?}", labels.dim())));
    }
    let fitter = Fitter { x: features, y: labels, config };
    let mut rows: Vec<usize> = (0..n).collect();
    Ok(fitter.grow(&mut rows, 0))
}

/// Leaf value reached by every row; rows go left iff `value <= threshold`.
pub fn predict_tree(tree: &TreeNode, features: ArrayView2<f64>) -> Result<Array2<f64>> {
    if let Some(f) = tree.max_feature() {
        if f >= features.ncols() {
            return Err(Error::shape(format!("at least {} columns", f + 1), format!("{} columns", features.ncols())));
        }
    }
    let mut out = Array2::zeros((features.nrows(), 2));
    for (i, row) in features.rows().into_iter().enumerate() {
        let v = tree.route(|j| row[j]);
        out[[i, 0]] = v[0];
        out[[i, 1]] = v[1];
    }
    Ok(out)
}

pub fn tree_to_json(tree: &TreeNode) -> Result<String> {
    Ok(serde_json::to_string(tree)?)
}

pub fn tree_from_json(json: &str) -> Result<TreeNode> {
    let mut de = serde_json::Deserializer::from_str(json);
    de.disable_recursion_limit();
    let tree = TreeNode::deserialize(&mut de)?;
    de.end()?;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn identical_labels_give_single_leaf() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = array![[4.0, 5.0], [4.0, 5.0], [4.0, 5.0]];
        let t = fit_tree(x.view(), y.view(), &TreeConfig::default()).unwrap();
        assert_eq!(t, TreeNode::Leaf { value: [4.0, 5.0], count: 3 });
        assert_eq!(predict_tree(&t, array![[100.0]].view()).unwrap(), array![[4.0, 5.0]]);
    }

    #[test]
    fn four_sample_split_by_hand() {
        // labels 0, 0, 10, 12 along one feature: splitting after the second
        // sample leaves only the {10, 12} spread
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [12.0, 0.0]];
        let cfg = TreeConfig { max_depth: Some(1), ..Default::default() };
        match fit_tree(x.view(), y.view(), &cfg).unwrap() {
            TreeNode::Internal { feature_index, threshold, left, right } => {
                assert_eq!(feature_index, 0);
                assert_eq!(threshold, 2.5);
                assert_eq!(*left, TreeNode::Leaf { value: [0.0, 0.0], count: 2 });
                assert_eq!(*right, TreeNode::Leaf { value: [11.0, 0.0], count: 2 });
            }
            leaf => panic!("expected a split, got {leaf:?}"),
        }
    }

    #[test]
    fn tie_goes_to_lowest_feature() {
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let y = array![[0.0, 0.0], [1.0, 1.0]];
        let t = fit_tree(x.view(), y.view(), &TreeConfig::default()).unwrap();
        assert!(matches!(t, TreeNode::Internal { feature_index: 0, .. }));
    }

    #[test]
    fn zero_gain_split_still_taken_for_xor() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = array![[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 0.0]];
        let t = fit_tree(x.view(), y.view(), &TreeConfig::default()).unwrap();
        assert_eq!(predict_tree(&t, x.view()).unwrap(), y);
    }

    #[test]
    fn midpoint_never_reaches_upper_value() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(midpoint(a, b), a);
        assert_eq!(midpoint(2.0, 4.0), 3.0);
    }

    #[test]
    fn respects_min_samples_leaf_and_depth() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64);
        let y = Array2::from_shape_fn((20, 2), |(i, j)| (i * (j + 1)) as f64);
        let cfg = TreeConfig { min_samples_leaf: 4, ..Default::default() };
        let t = fit_tree(x.view(), y.view(), &cfg).unwrap();
        assert!(t.leaves().iter().all(|(_, c)| *c >= 4));
        assert_eq!(t.leaves().iter().map(|(_, c)| c).sum::<usize>(), 20);
        let shallow = fit_tree(x.view(), y.view(), &TreeConfig { max_depth: Some(2), ..Default::default() }).unwrap();
        assert!(shallow.depth() <= 2);
    }

    #[test]
    fn bad_inputs() {
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(fit_tree(empty.view(), empty.view(), &TreeConfig::default()), Err(Error::Empty(_))));
        let x = array![[1.0, 2.0]];
        let cfg = TreeConfig { min_samples_split: 1, ..Default::default() };
        assert!(fit_tree(x.view(), array![[0.0, 0.0]].view(), &cfg).is_err());
        let t = fit_tree(
            array![[0.0, 0.0], [0.0, 1.0]].view(),
            array![[0.0, 0.0], [1.0, 1.0]].view(),
            &TreeConfig::default(),
        )
        .unwrap();
        assert!(predict_tree(&t, array![[0.0]].view()).is_err());
    }

    fn distinct_rows(n: usize, d: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut s = seed;
        let mut next = || {
            s = crate::seed::splitmix64(s);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let x = Array2::from_shape_simple_fn((n, d), &mut next);
        let y = Array2::from_shape_simple_fn((n, 2), || next() * 100.0);
        (x, y)
    }

    proptest! {
        #[test]
        fn unlimited_tree_interpolates_training_rows(n in 1usize..60, d in 1usize..4, seed in any::<u64>()) {
            let (x, y) = distinct_rows(n, d, seed);
            let t = fit_tree(x.view(), y.view(), &TreeConfig::default()).unwrap();
            prop_assert_eq!(predict_tree(&t, x.view()).unwrap(), y);
            prop_assert_eq!(t.leaves().iter().map(|(_, c)| c).sum::<usize>(), n);
        }

        #[test]
        fn monotone_rescaling_preserves_training_predictions(n in 2usize..40, seed in any::<u64>(), depth in 1usize..5) {
            let (x, y) = distinct_rows(n, 2, seed);
            let cfg = TreeConfig { max_depth: Some(depth), ..Default::default() };
            let warped = x.mapv(|v| (3.0 * v).exp() - 7.0);
            let a_train = predict_tree(&fit_tree(x.view(), y.view(), &cfg).unwrap(), x.view()).unwrap();
            let b_train = predict_tree(&fit_tree(warped.view(), y.view(), &cfg).unwrap(), warped.view()).unwrap();
            prop_assert_eq!(a_train, b_train);
        }

        #[test]
        fn json_round_trip(n in 1usize..40, seed in any::<u64>()) {
            let (x, y) = distinct_rows(n, 3, seed);
            let t = fit_tree(x.view(), y.view(), &TreeConfig::default()).unwrap();
            let back = tree_from_json(&tree_to_json(&t).unwrap()).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(predict_tree(&back, x.view()).unwrap(), predict_tree(&t, x.view()).unwrap());
        }
    }
}

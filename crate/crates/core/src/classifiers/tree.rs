//! CART trees for binary labels with Gini impurity.
//!
//! Candidate thresholds are midpoints between consecutive distinct values of
//! a feature; samples with `x <= threshold` go left. Split quality is
//! compared exactly on integer class counts, so the tie-break (lower feature
//! index, then lower threshold) is never disturbed by rounding.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{cmp_scalar, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Recorded for reproducibility; CART over all features has no random
    /// choices, so fitting does not consume it.
    #[serde(default)]
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 5, seed: 0 }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::InvalidParam("max_depth must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Fraction of class-1 samples that reached the leaf.
        p1: T,
        n: usize,
    },
}

/// Fitted tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel<T> {
    pub n_features: usize,
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> TreeModel<T> {
    pub fn leaf_p1(&self, x: &[T]) -> T {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { p1, .. } => return *p1,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// How many features each node considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Candidates {
    All,
    Random(usize),
}

pub(crate) struct GrowOptions {
    pub max_depth: Option<usize>,
    pub candidates: Candidates,
}

/// A fitted tree plus its unnormalized impurity decrease per feature,
/// each node weighted by its share of the root's samples.
pub(crate) struct Grown<T> {
    pub tree: TreeModel<T>,
    pub importance: Vec<T>,
}

struct SplitChoice<T> {
    feature: usize,
    threshold: T,
    /// `q = (c0l*c1l*nr + c0r*c1r*nl) / (nl*nr)`; smaller is better.
    q_num: u128,
    q_den: u128,
}

/// `c0*c1/n` style ratio comparisons for the Gini gain. With class counts
/// `(c0, c1)` in a node of size `n`, Gini is `2*c0*c1/n^2`, and the weighted
/// child impurity is `(2/n) * (c0l*c1l/nl + c0r*c1r/nr)`.
fn q_ratio(l: [u64; 2], r: [u64; 2]) -> (u128, u128) {
    let (nl, nr) = (u128::from(l[0] + l[1]), u128::from(r[0] + r[1]));
    let num = u128::from(l[0]) * u128::from(l[1]) * nr + u128::from(r[0]) * u128::from(r[1]) * nl;
    (num, nl * nr)
}

fn less(a: (u128, u128), b: (u128, u128)) -> bool {
    a.0 * b.1 < b.0 * a.1
}

fn gini_count<T: Scalar>(c: [u64; 2]) -> T {
    let n = c[0] + c[1];
    if n == 0 {
        return T::zero();
    }
    let n = T::lit(n as f64);
    T::lit(2.0) * T::lit(c[0] as f64) * T::lit(c[1] as f64) / (n * n)
}

struct Grower<'a, T> {
    ds: &'a Dataset<T>,
    opts: &'a GrowOptions,
    rng: Option<&'a mut Rng>,
    nodes: Vec<Node<T>>,
    importance: Vec<T>,
    root_n: usize,
}

impl<'a, T: Scalar> Grower<'a, T> {
    fn counts(&self, samples: &[usize]) -> [u64; 2] {
        let pos = samples.iter().filter(|&&i| self.ds.labels()[i] == 1).count() as u64;
        [samples.len() as u64 - pos, pos]
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.ds.n_features();
        match self.opts.candidates {
            Candidates::All => (0..d).collect(),
            Candidates::Random(m) if m >= d => (0..d).collect(),
            Candidates::Random(m) => {
                let rng = self.rng.as_deref_mut().expect("random candidates need an rng");
                let mut f = index::sample(rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
        }
    }

    fn best_split(&mut self, samples: &[usize], parent: [u64; 2]) -> Option<SplitChoice<T>> {
        let n = samples.len() as u128;
        // gain > 0  <=>  q < c0*c1/n
        let parent_q = (u128::from(parent[0]) * u128::from(parent[1]), n);
        let mut best: Option<SplitChoice<T>> = None;
        let mut sorted: Vec<(T, u8)> = Vec::with_capacity(samples.len());
        for feature in self.candidate_features() {
            sorted.clear();
            sorted.extend(
                samples
                    .iter()
                    .map(|&i| (self.ds.value(i, feature), self.ds.labels()[i])),
            );
            sorted.sort_by(|a, b| cmp_scalar(a.0, b.0));
            let mut left = [0u64; 2];
            for k in 0..sorted.len() - 1 {
                left[usize::from(sorted[k].1)] += 1;
                let (lo, hi) = (sorted[k].0, sorted[k + 1].0);
                if lo == hi {
                    continue;
                }
                let right = [parent[0] - left[0], parent[1] - left[1]];
                let q = q_ratio(left, right);
                if !less(q, parent_q) {
                    continue;
                }
                if best.as_ref().is_none_or(|b| less(q, (b.q_num, b.q_den))) {
                    let mut threshold = (lo + hi) / T::lit(2.0);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(SplitChoice {
                        feature,
                        threshold,
                        q_num: q.0,
                        q_den: q.1,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&samples);
        let id = self.nodes.len();
        let leaf = Node::Leaf {
            p1: T::lit(counts[1] as f64) / T::lit(samples.len() as f64),
            n: samples.len(),
        };
        self.nodes.push(leaf);
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || self.opts.max_depth.is_some_and(|m| depth >= m) {
            return id;
        }
        let Some(split) = self.best_split(&samples, counts) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.ds.value(i, split.feature) <= split.threshold);

        let lc = self.counts(&left);
        let rc = self.counts(&right);
        let n = T::lit(samples.len() as f64);
        let decrease = gini_count::<T>(counts)
            - (T::lit(left.len() as f64) / n) * gini_count::<T>(lc)
            - (T::lit(right.len() as f64) / n) * gini_count::<T>(rc);
        self.importance[split.feature] += n / T::lit(self.root_n as f64) * decrease;

        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }
}

/// Grows a tree on `samples` (row indices into `ds`, repeats allowed).
pub(crate) fn grow_tree<T: Scalar>(
    ds: &Dataset<T>,
    samples: Vec<usize>,
    opts: &GrowOptions,
    rng: Option<&mut Rng>,
) -> Grown<T> {
    let mut g = Grower {
        ds,
        opts,
        rng,
        nodes: Vec::new(),
        importance: vec![T::zero(); ds.n_features()],
        root_n: samples.len(),
    };
    g.grow(samples, 0);
    Grown {
        tree: TreeModel {
            n_features: ds.n_features(),
            nodes: g.nodes,
        },
        importance: g.importance,
    }
}

pub fn train_decision_tree<T: Scalar>(train: &Dataset<T>, params: &TreeParams) -> Result<TreeModel<T>> {
    params.validate()?;
    if train.n_samples() == 0 || train.n_features() == 0 {
        return Err(Error::InvalidDataset("empty training set".into()));
    }
    let opts = GrowOptions {
        max_depth: Some(params.max_depth),
        candidates: Candidates::All,
    };
    Ok(grow_tree(train, (0..train.n_samples()).collect(), &opts, None).tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn threshold_data(n: usize) -> Dataset<f64> {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![i as f64 / (n - 1) as f64, ((i * 7) % 5) as f64])
            .collect();
        let labels = rows.iter().map(|r| u8::from(r[0] > 0.5)).collect();
        Dataset::from_rows(&rows, labels).unwrap()
    }

    fn accuracy(tree: &TreeModel<f64>, ds: &Dataset<f64>) -> f64 {
        let hits = ds
            .rows()
            .zip(ds.labels())
            .filter(|(r, &y)| u8::from(tree.leaf_p1(r) >= 0.5) == y)
            .count();
        hits as f64 / ds.n_samples() as f64
    }

    #[test]
    fn single_threshold_gives_stump() {
        let ds = threshold_data(20);
        let tree = train_decision_tree(&ds, &TreeParams::default()).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(accuracy(&tree, &ds), 1.0);
        match &tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 9.0 / 19.0 && *threshold < 10.0 / 19.0);
            }
            other => panic!("root is {other:?}"),
        }
    }

    #[test]
    fn pure_input_is_single_leaf() {
        let rows = vec![vec![1.0], vec![2.0], vec![3.0]];
        let ds = Dataset::from_rows(&rows, vec![1, 1, 1]).unwrap();
        let opts = GrowOptions {
            max_depth: None,
            candidates: Candidates::All,
        };
        let g = grow_tree(&ds, vec![0, 1, 2], &opts, None);
        assert_eq!(g.tree.nodes.len(), 1);
        assert!(g.importance.iter().all(|&v| v == 0.0));
        let t = train_decision_tree(&ds, &TreeParams::default()).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { p1: 1.0, n: 3 }]);
    }

    #[test]
    fn ties_prefer_lower_feature_and_threshold() {
        // both columns separate the labels identically
        let rows = vec![vec![0.0, 10.0], vec![1.0, 11.0], vec![2.0, 12.0], vec![3.0, 13.0]];
        let ds = Dataset::from_rows(&rows, vec![0, 0, 1, 1]).unwrap();
        let tree = train_decision_tree(&ds, &TreeParams::default()).unwrap();
        assert!(matches!(tree.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 1.5));
    }

    #[test]
    fn depth_limit_respected_and_deterministic() {
        let mut rng = crate::rng::seeded(1);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..4).map(|_| rng.gen::<f64>()).collect()).collect();
        let labels = (0..200).map(|_| rng.gen_range(0..2)).collect();
        let ds = Dataset::from_rows(&rows, labels).unwrap();
        for depth in 1..6 {
            let p = TreeParams {
                max_depth: depth,
                seed: 0,
            };
            let t = train_decision_tree(&ds, &p).unwrap();
            assert!(t.depth() <= depth);
            assert_eq!(t, train_decision_tree(&ds, &p).unwrap());
        }
    }

    #[test]
    fn monotone_transform_preserves_predictions() {
        let mut rng = crate::rng::seeded(2);
        for _ in 0..10 {
            let rows: Vec<Vec<f64>> = (0..60)
                .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let labels: Vec<u8> = rows
                .iter()
                .map(|r| u8::from(r[0] + 0.5 * r[1] > rng.gen_range(-0.5..0.5)))
                .collect();
            let ds = Dataset::from_rows(&rows, labels.clone()).unwrap();
            let f = |v: f64| v.powi(3) * 2.0 + 5.0;
            let trows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect();
            let tds = Dataset::from_rows(&trows, labels).unwrap();
            let p = TreeParams { max_depth: 4, seed: 0 };
            let a = train_decision_tree(&ds, &p).unwrap();
            let b = train_decision_tree(&tds, &p).unwrap();
            // thresholds are midpoints, so only the training points are
            // guaranteed to land in matching leaves
            assert_eq!(a.nodes.len(), b.nodes.len());
            for (x, tx) in rows.iter().zip(&trows) {
                assert_eq!(a.leaf_p1(x), b.leaf_p1(tx));
            }
        }
    }

    #[test]
    fn adjacent_floats_split_correctly() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let ds = Dataset::from_rows(&[vec![a], vec![b]], vec![0, 1]).unwrap();
        let t = train_decision_tree(&ds, &TreeParams::default()).unwrap();
        assert_eq!(t.leaf_p1(&[a]), 0.0);
        assert_eq!(t.leaf_p1(&[b]), 1.0);
    }
}

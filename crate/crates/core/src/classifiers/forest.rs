use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Candidates, GrowOptions, TreeModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `floor(sqrt(d))`, at least 1.
    #[default]
    Sqrt,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub seed: u64,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            seed: 42,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParam("n_trees must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel<T> {
    pub n_features: usize,
    pub trees: Vec<TreeModel<T>>,
    /// Mean decrease in Gini impurity, normalized to sum to 1 (all zero when
    /// no tree split).
    pub feature_importances: Vec<T>,
}

impl<T: Scalar> ForestModel<T> {
    /// Number of trees voting class 1 (leaf proportion >= 0.5).
    pub fn votes(&self, x: &[T]) -> usize {
        let half = T::lit(0.5);
        self.trees.iter().filter(|t| t.leaf_p1(x) >= half).count()
    }

    /// Majority vote; a tie goes to class 0.
    pub fn predict_label(&self, x: &[T]) -> u8 {
        u8::from(2 * self.votes(x) > self.trees.len())
    }

    pub fn predict_proba(&self, x: &[T]) -> T {
        let sum: T = self.trees.iter().map(|t| t.leaf_p1(x)).sum();
        sum / T::from_count(self.trees.len())
    }
}

/// Unlimited-depth trees on bootstrap samples. Tree `i` draws from its own
/// stream seeded by `(seed, i)`, so trees can be grown in parallel.
pub fn train_random_forest<T: Scalar>(train: &Dataset<T>, params: &ForestParams) -> Result<ForestModel<T>> {
    params.validate()?;
    if train.n_samples() == 0 || train.n_features() == 0 {
        return Err(Error::InvalidDataset("empty training set".into()));
    }
    let n = train.n_samples();
    let d = train.n_features();
    let opts = GrowOptions {
        max_depth: None,
        candidates: match params.max_features.resolve(d) {
            m if m >= d => Candidates::All,
            m => Candidates::Random(m),
        },
    };
    let grown: Vec<_> = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::seeded(rng::derive_seed(params.seed, i as u64));
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(train, samples, &opts, Some(&mut rng))
        })
        .collect();

    let mut importance = vec![T::zero(); d];
    for g in &grown {
        for (acc, &v) in importance.iter_mut().zip(&g.importance) {
            *acc += v;
        }
    }
    let n_trees = T::from_count(params.n_trees);
    importance.iter_mut().for_each(|v| *v /= n_trees);
    let total: T = importance.iter().copied().sum();
    if total > T::zero() {
        importance.iter_mut().for_each(|v| *v /= total);
    }
    Ok(ForestModel {
        n_features: d,
        trees: grown.into_iter().map(|g| g.tree).collect(),
        feature_importances: importance,
    })
}

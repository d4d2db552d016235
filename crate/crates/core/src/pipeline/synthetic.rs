use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Parameters of the synthetic generator. A `None` seed is derived from the
/// pipeline's master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub n_informative: usize,
    pub noise: f64,
    pub seed: Option<u64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 256,
            n_informative: 10,
            noise: 1.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic<T> {
    pub dataset: Dataset<T>,
    /// Ground-truth informative feature indices, ascending.
    pub informative: Vec<usize>,
}

/// Gaussian features; the label is 1 for the upper half of a seeded linear
/// score over the informative features plus `noise`-scaled Gaussian noise.
/// Non-informative columns are independent of the label.
pub fn generate_synthetic<T: Scalar>(
    n: usize,
    d: usize,
    n_informative: usize,
    noise: f64,
    seed: u64,
) -> Result<Synthetic<T>> {
    if n < 4 {
        return Err(Error::InvalidParam(format!("need n >= 4, got {n}")));
    }
    if n_informative == 0 || n_informative > d {
        return Err(Error::InvalidParam(format!(
            "n_informative {n_informative} outside 1..={d}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidParam("noise must be finite and >= 0".into()));
    }

    let mut pick = rng::seeded(rng::derive_named(seed, "informative"));
    let mut informative = index::sample(&mut pick, d, n_informative).into_vec();
    informative.sort_unstable();
    let weights: Vec<f64> = (0..n_informative)
        .map(|_| {
            let sign = if pick.gen::<bool>() { 1.0 } else { -1.0 };
            sign * pick.gen_range(0.5..1.5)
        })
        .collect();

    let mut feat = rng::seeded(rng::derive_named(seed, "features"));
    let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut feat)).collect();
    let mut eps = rng::seeded(rng::derive_named(seed, "noise"));
    let scores: Vec<f64> = x
        .chunks_exact(d)
        .map(|row| {
            let e: f64 = StandardNormal.sample(&mut eps);
            informative.iter().zip(&weights).map(|(&j, w)| w * row[j]).sum::<f64>() + noise * e
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut labels = vec![0u8; n];
    for &i in &order[n / 2..] {
        labels[i] = 1;
    }

    let features = x.into_iter().map(T::lit).collect();
    let dataset = Dataset::with_default_ids(features, d, labels)?;
    Ok(Synthetic { dataset, informative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{train_decision_tree, TreeParams};

    #[test]
    fn noiseless_single_feature_is_a_stump() {
        let s = generate_synthetic::<f64>(200, 5, 1, 0.0, 3).unwrap();
        let tree = train_decision_tree(
            &s.dataset,
            &TreeParams {
                max_depth: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let correct = s
            .dataset
            .rows()
            .zip(s.dataset.labels())
            .filter(|(r, &y)| u8::from(tree.leaf_p1(r) >= 0.5) == y)
            .count();
        assert_eq!(correct, 200);
    }

    #[test]
    fn all_informative() {
        let s = generate_synthetic::<f64>(50, 6, 6, 0.5, 1).unwrap();
        assert_eq!(s.informative, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn classes_balanced() {
        for n in [4, 5, 101, 1000] {
            let s = generate_synthetic::<f32>(n, 3, 2, 1.0, 7).unwrap();
            let [neg, pos] = s.dataset.class_counts();
            assert!(neg.abs_diff(pos) <= 1);
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate_synthetic::<f64>(100, 8, 3, 1.0, 11).unwrap();
        let b = generate_synthetic::<f64>(100, 8, 3, 1.0, 11).unwrap();
        let c = generate_synthetic::<f64>(100, 8, 3, 1.0, 12).unwrap();
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        crate::dataset::write_csv(&a.dataset, &mut wa).unwrap();
        crate::dataset::write_csv(&b.dataset, &mut wb).unwrap();
        assert_eq!(wa, wb);
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn bad_arguments() {
        assert!(generate_synthetic::<f64>(3, 2, 1, 0.0, 0).is_err());
        assert!(generate_synthetic::<f64>(10, 2, 3, 0.0, 0).is_err());
        assert!(generate_synthetic::<f64>(10, 2, 1, -1.0, 0).is_err());
    }
}

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::ClassifierConfig;
use crate::dataset::{apply_mask, stratified_split_indices, Dataset, FeatureMask, SplitSpec};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// How a candidate subset is scored: a surrogate classifier is fit on part of
/// the training data and scored on a held-out validation share, minus a
/// penalty proportional to the fraction of features kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitnessSpec {
    pub surrogate: ClassifierConfig,
    pub val_fraction: f64,
    pub size_penalty_lambda: f64,
    pub seed: u64,
}

impl Default for FitnessSpec {
    fn default() -> Self {
        Self {
            surrogate: ClassifierConfig::Gnb,
            val_fraction: 0.2,
            size_penalty_lambda: 0.01,
            seed: 0,
        }
    }
}

impl FitnessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidParam(format!(
                "val_fraction {} outside (0, 1)",
                self.val_fraction
            )));
        }
        if self.size_penalty_lambda.is_nan() || self.size_penalty_lambda < 0.0 {
            return Err(Error::InvalidParam("size_penalty_lambda must be >= 0".into()));
        }
        self.surrogate.validate()
    }
}

/// Stable hash of a mask, used to derive per-candidate surrogate seeds.
pub(crate) fn mask_hash(mask: &FeatureMask) -> u64 {
    mask.bits().iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b) ^ 0x5a).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Scores feature masks for one search run. The fit/validation split is made
/// once; results are memoized per mask unless memoization is disabled.
pub struct FitnessEvaluator<T> {
    fit: Dataset<T>,
    val: Dataset<T>,
    spec: FitnessSpec,
    n_features: usize,
    cache: Option<Mutex<HashMap<FeatureMask, T>>>,
    evaluations: AtomicUsize,
}

impl<T: Scalar> FitnessEvaluator<T> {
    pub fn new(train: &Dataset<T>, spec: &FitnessSpec) -> Result<Self> {
        Self::build(train, spec, true)
    }

    /// Evaluator that recomputes every request.
    pub fn without_memo(train: &Dataset<T>, spec: &FitnessSpec) -> Result<Self> {
        Self::build(train, spec, false)
    }

    fn build(train: &Dataset<T>, spec: &FitnessSpec, memoize: bool) -> Result<Self> {
        spec.validate()?;
        if train.n_features() == 0 {
            return Err(Error::InvalidDataset("no features to select from".into()));
        }
        let split = SplitSpec {
            t_percent: spec.val_fraction,
            seed: spec.seed,
        };
        let (fit_idx, val_idx) = stratified_split_indices(train.labels(), &split)?;
        Ok(Self {
            fit: train.select_rows(&fit_idx),
            val: train.select_rows(&val_idx),
            spec: spec.clone(),
            n_features: train.n_features(),
            cache: memoize.then(|| Mutex::new(HashMap::new())),
            evaluations: AtomicUsize::new(0),
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn spec(&self) -> &FitnessSpec {
        &self.spec
    }

    /// Number of surrogate fits performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    fn compute(&self, mask: &FeatureMask) -> Result<T> {
        if mask.len() != self.n_features {
            return Err(Error::MaskLength {
                mask: mask.len(),
                features: self.n_features,
            });
        }
        if !mask.any() {
            return Ok(T::neg_infinity());
        }
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let fit = apply_mask(&self.fit, mask)?;
        let val = apply_mask(&self.val, mask)?;
        let surrogate = self
            .spec
            .surrogate
            .with_seed(rng::derive_seed(self.spec.seed, mask_hash(mask)));
        let model = surrogate.train(&fit)?;
        let pred = model.predict_dataset(&val)?;
        let correct = pred.labels.iter().zip(val.labels()).filter(|(a, b)| a == b).count();
        let accuracy = T::from_count(correct) / T::from_count(val.n_samples());
        let penalty =
            T::lit(self.spec.size_penalty_lambda) * T::from_count(mask.count()) / T::from_count(self.n_features);
        Ok(accuracy - penalty)
    }

    /// `val_accuracy - lambda * |mask| / d`; an empty mask scores `-inf`.
    pub fn evaluate(&self, mask: &FeatureMask) -> Result<T> {
        let Some(cache) = &self.cache else {
            return self.compute(mask);
        };
        if let Some(&v) = cache.lock().expect("fitness cache poisoned").get(mask) {
            return Ok(v);
        }
        let v = self.compute(mask)?;
        cache.lock().expect("fitness cache poisoned").insert(mask.clone(), v);
        Ok(v)
    }

    /// Scores a population, fitting distinct unseen masks in parallel.
    pub fn evaluate_many(&self, masks: &[FeatureMask]) -> Result<Vec<T>> {
        let Some(cache) = &self.cache else {
            return masks.par_iter().map(|m| self.compute(m)).collect();
        };
        let mut pending: Vec<&FeatureMask> = {
            let c = cache.lock().expect("fitness cache poisoned");
            masks.iter().filter(|m| !c.contains_key(*m)).collect()
        };
        pending.sort();
        pending.dedup();
        let fresh: Vec<T> = pending.par_iter().map(|m| self.compute(m)).collect::<Result<_>>()?;
        let mut c = cache.lock().expect("fitness cache poisoned");
        for (m, v) in pending.into_iter().zip(fresh) {
            c.insert(m.clone(), v);
        }
        Ok(masks.iter().map(|m| c[m]).collect())
    }
}

/// One-off fitness of `mask` on `train`.
pub fn evaluate_fitness<T: Scalar>(mask: &FeatureMask, train: &Dataset<T>, spec: &FitnessSpec) -> Result<T> {
    FitnessEvaluator::new(train, spec)?.evaluate(mask)
}

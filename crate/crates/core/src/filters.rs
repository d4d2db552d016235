//! Classifier-independent feature scores and top-k selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::forest::{train_random_forest, ForestParams};
use crate::dataset::{Dataset, FeatureMask};
use crate::error::{Error, Result};
use crate::scalar::{cmp_scalar, Scalar};

pub const DEFAULT_MI_BINS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMethod {
    Variance,
    #[serde(alias = "anova")]
    AnovaF,
    #[serde(alias = "mi")]
    MutualInfo,
    #[serde(alias = "rf")]
    RfImportance,
}

impl std::str::FromStr for FilterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(Self::Variance),
            "anova" | "anova_f" => Ok(Self::AnovaF),
            "mi" | "mutual_info" => Ok(Self::MutualInfo),
            "rf" | "rf_importance" => Ok(Self::RfImportance),
            other => Err(Error::InvalidParam(format!("unknown filter method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScores<T> {
    pub method: FilterMethod,
    pub scores: Vec<T>,
}

fn per_feature<T: Scalar>(ds: &Dataset<T>, f: impl Fn(&[T]) -> T + Sync) -> Vec<T> {
    (0..ds.n_features()).into_par_iter().map(|j| f(&ds.column(j))).collect()
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::from_count(xs.len())
}

/// Population variance per feature.
pub fn variance_scores<T: Scalar>(ds: &Dataset<T>) -> Result<FeatureScores<T>> {
    if ds.n_samples() == 0 {
        return Err(Error::InvalidDataset("no samples".into()));
    }
    let scores = per_feature(ds, |col| {
        let m = mean(col);
        col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::from_count(col.len())
    });
    Ok(FeatureScores {
        method: FilterMethod::Variance,
        scores,
    })
}

/// One-way ANOVA F statistic with two groups. `MS_within = 0` maps to
/// `+inf` when the group means differ and to `0` otherwise.
pub fn anova_f_scores<T: Scalar>(ds: &Dataset<T>) -> Result<FeatureScores<T>> {
    ds.require_both_classes()?;
    let labels = ds.labels();
    let n = ds.n_samples();
    let scores = per_feature(ds, |col| {
        let groups: [Vec<T>; 2] = [0u8, 1].map(|c| {
            col.iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(&v, _)| v)
                .collect()
        });
        let grand = mean(col);
        let mut ss_between = T::zero();
        let mut ss_within = T::zero();
        for g in &groups {
            let constant = g.iter().all(|&v| v == g[0]);
            let gm = if constant { g[0] } else { mean(g) };
            ss_between += T::from_count(g.len()) * (gm - grand) * (gm - grand);
            if !constant {
                ss_within += g.iter().map(|&v| (v - gm) * (v - gm)).sum::<T>();
            }
        }
        // both groups constant
        if ss_within == T::zero() {
            return if groups[0][0] != groups[1][0] {
                T::infinity()
            } else {
                T::zero()
            };
        }
        // df_between = 1, df_within = n - 2
        ss_between / (ss_within / T::from_count(n - 2))
    });
    Ok(FeatureScores {
        method: FilterMethod::AnovaF,
        scores,
    })
}

/// Equal-width bin index of each value over `[min, max]`; a constant column
/// falls into a single bin.
fn bin_column<T: Scalar>(col: &[T], bins: usize) -> Vec<usize> {
    let lo = col.iter().copied().fold(T::infinity(), T::min);
    let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
    if hi <= lo {
        return vec![0; col.len()];
    }
    let width = hi - lo;
    let b = T::from_count(bins);
    col.iter()
        .map(|&v| {
            let idx = ((v - lo) / width * b).floor().to_usize().unwrap_or(0);
            idx.min(bins - 1)
        })
        .collect()
}

/// Discrete mutual information (nats) between the binned feature and the label.
pub fn mutual_info_scores<T: Scalar>(ds: &Dataset<T>, bins: usize) -> Result<FeatureScores<T>> {
    if bins == 0 {
        return Err(Error::InvalidParam("bins must be >= 1".into()));
    }
    if ds.n_samples() < 2 {
        return Err(Error::InvalidDataset("mutual information needs >= 2 samples".into()));
    }
    let labels = ds.labels();
    let n = T::from_count(ds.n_samples());
    let scores = per_feature(ds, |col| {
        let binned = bin_column(col, bins);
        let mut joint = vec![[0usize; 2]; bins];
        for (&b, &l) in binned.iter().zip(labels) {
            joint[b][usize::from(l)] += 1;
        }
        let class_tot = [0, 1].map(|c| joint.iter().map(|j| j[c]).sum::<usize>());
        let mut mi = T::zero();
        for j in &joint {
            let bin_tot = j[0] + j[1];
            for c in 0..2 {
                if j[c] == 0 {
                    continue;
                }
                let pxy = T::from_count(j[c]) / n;
                let ratio = T::from_count(j[c]) * n / (T::from_count(bin_tot) * T::from_count(class_tot[c]));
                mi += pxy * ratio.ln();
            }
        }
        mi.max(T::zero())
    });
    Ok(FeatureScores {
        method: FilterMethod::MutualInfo,
        scores,
    })
}

/// Mean decrease in Gini impurity from a random forest, normalized to sum 1.
pub fn rf_importance_scores<T: Scalar>(ds: &Dataset<T>, params: &ForestParams) -> Result<FeatureScores<T>> {
    let forest = train_random_forest(ds, params)?;
    Ok(FeatureScores {
        method: FilterMethod::RfImportance,
        scores: forest.feature_importances,
    })
}

/// Parameters the scoring methods need beyond the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterOptions {
    pub mi_bins: usize,
    pub forest: ForestParams,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            mi_bins: DEFAULT_MI_BINS,
            forest: ForestParams::default(),
        }
    }
}

pub fn score_features<T: Scalar>(
    ds: &Dataset<T>,
    method: FilterMethod,
    opts: &FilterOptions,
) -> Result<FeatureScores<T>> {
    match method {
        FilterMethod::Variance => variance_scores(ds),
        FilterMethod::AnovaF => anova_f_scores(ds),
        FilterMethod::MutualInfo => mutual_info_scores(ds, opts.mi_bins),
        FilterMethod::RfImportance => rf_importance_scores(ds, &opts.forest),
    }
}

/// Indices of features ordered best first: descending score, lower index
/// first among equal scores.
pub fn ranking<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| cmp_scalar(scores[b], scores[a]).then(a.cmp(&b)));
    order
}

/// Mask of the `k` best-scoring features.
pub fn select_top_k<T: Scalar>(scores: &FeatureScores<T>, k: usize) -> Result<FeatureMask> {
    let d = scores.scores.len();
    if k == 0 || k > d {
        return Err(Error::KOutOfRange { k, n: d });
    }
    let mut mask = FeatureMask::none(d);
    for &j in &ranking(&scores.scores)[..k] {
        mask.set(j, true);
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn ds1(col: &[f64], labels: &[u8]) -> Dataset<f64> {
        Dataset::with_default_ids(col.to_vec(), 1, labels.to_vec()).unwrap()
    }

    fn scores(v: &[f64]) -> FeatureScores<f64> {
        FeatureScores {
            method: FilterMethod::Variance,
            scores: v.to_vec(),
        }
    }

    #[test]
    fn variance_examples() {
        let ds = Dataset::from_rows(&[vec![5.0, 0.0, 1.0], vec![5.0, 2.0, 7.0]], vec![0, 1]).unwrap();
        let v = variance_scores(&ds).unwrap().scores;
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 1.0);
        let shifted = Dataset::from_rows(&[vec![105.0, 1000.0, 1.0], vec![105.0, 1002.0, 7.0]], vec![0, 1]).unwrap();
        let s = variance_scores(&shifted).unwrap().scores;
        assert_eq!(s, v);
    }

    #[test]
    fn anova_examples() {
        // class means 1.5 / 3.5, grand mean 2.5: SSB = 4, SSW = 1, df = (1, 2)
        let f = anova_f_scores(&ds1(&[1.0, 2.0, 3.0, 4.0], &[0, 0, 1, 1])).unwrap();
        assert_eq!(f.scores[0], 8.0);
        let eq = anova_f_scores(&ds1(&[1.0, 3.0, 0.0, 4.0], &[0, 0, 1, 1])).unwrap();
        assert_eq!(eq.scores[0], 0.0);
        let inf = anova_f_scores(&ds1(&[1.0, 1.0, 3.0, 3.0], &[0, 0, 1, 1])).unwrap();
        assert_eq!(inf.scores[0], f64::INFINITY);
        let zero = anova_f_scores(&ds1(&[2.0, 2.0, 2.0, 2.0], &[0, 0, 1, 1])).unwrap();
        assert_eq!(zero.scores[0], 0.0);
        assert!(matches!(
            anova_f_scores(&ds1(&[1.0, 2.0], &[1, 1])),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn mutual_info_examples() {
        let mi = mutual_info_scores(&ds1(&[0.0, 0.0, 1.0, 1.0], &[0, 0, 1, 1]), 2).unwrap();
        assert!((mi.scores[0] - std::f64::consts::LN_2).abs() <= 1e-12);
        let c = mutual_info_scores(&ds1(&[3.0; 4], &[0, 0, 1, 1]), 8).unwrap();
        assert_eq!(c.scores[0], 0.0);
        assert!(mutual_info_scores(&ds1(&[0.0, 1.0], &[0, 1]), 0).is_err());
    }

    #[test]
    fn mutual_info_beats_permuted_labels() {
        let mut r = crate::rng::seeded(4);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..1.0)).collect();
        let y: Vec<u8> = x.iter().map(|&v| u8::from(v + r.gen_range(-0.3..0.3) > 0.5)).collect();
        let orig = mutual_info_scores(&ds1(&x, &y), DEFAULT_MI_BINS).unwrap().scores[0];
        let mut total = 0.0;
        for _ in 0..20 {
            let mut yp = y.clone();
            rand::seq::SliceRandom::shuffle(yp.as_mut_slice(), &mut r);
            total += mutual_info_scores(&ds1(&x, &yp), DEFAULT_MI_BINS).unwrap().scores[0];
        }
        assert!(orig >= total / 20.0);
    }

    #[test]
    fn rf_importance_finds_the_deciding_feature() {
        let mut r = crate::rng::seeded(10);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..5).map(|_| r.gen_range(0.0..1.0)).collect())
            .collect();
        let mut f0: Vec<f64> = rows.iter().map(|x| x[0]).collect();
        f0.sort_by(f64::total_cmp);
        let median = (f0[59] + f0[60]) / 2.0;
        let labels = rows.iter().map(|x| u8::from(x[0] > median)).collect();
        let ds = Dataset::from_rows(&rows, labels).unwrap();
        let p = ForestParams {
            n_trees: 30,
            ..Default::default()
        };
        let s = rf_importance_scores(&ds, &p).unwrap();
        assert_eq!(ranking(&s.scores)[0], 0);
        assert!((s.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(s.scores, rf_importance_scores(&ds, &p).unwrap().scores);

        let pure = Dataset::from_rows(&rows, vec![1; 120]).unwrap();
        let z = rf_importance_scores(&pure, &p).unwrap();
        assert!(z.scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(
            select_top_k(&scores(&[0.1, 0.9, 0.5]), 2).unwrap().bits(),
            &[false, true, true]
        );
        assert_eq!(select_top_k(&scores(&[0.5, 0.5, 0.1]), 1).unwrap().indices(), vec![0]);
        assert_eq!(select_top_k(&scores(&[0.5, 0.2, 0.1]), 3).unwrap(), FeatureMask::all(3));
        assert_eq!(
            select_top_k(&scores(&[1e300, f64::INFINITY]), 1).unwrap().indices(),
            vec![1]
        );
        for k in [0, 4] {
            assert!(matches!(
                select_top_k(&scores(&[0.5, 0.2, 0.1]), k),
                Err(Error::KOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn parallel_scoring_matches_single_thread() {
        let mut r = crate::rng::seeded(12);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..20).map(|_| r.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels = (0..50).map(|i| (i % 2) as u8).collect();
        let ds = Dataset::from_rows(&rows, labels).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        for m in [FilterMethod::Variance, FilterMethod::AnovaF, FilterMethod::MutualInfo] {
            let a = one.install(|| score_features(&ds, m, &FilterOptions::default()).unwrap());
            let b = score_features(&ds, m, &FilterOptions::default()).unwrap();
            assert_eq!(a, b);
        }
    }

    proptest! {
        #[test]
        fn anova_affine_invariant(
            vals in proptest::collection::vec(-100.0f64..100.0, 6..30),
            a in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
            b in -1e3f64..1e3,
        ) {
            let labels: Vec<u8> = (0..vals.len()).map(|i| (i % 2) as u8).collect();
            let f = anova_f_scores(&ds1(&vals, &labels)).unwrap().scores[0];
            let t: Vec<f64> = vals.iter().map(|&v| a * v + b).collect();
            let g = anova_f_scores(&ds1(&t, &labels)).unwrap().scores[0];
            prop_assume!(f.is_finite() && f > 1e-6);
            prop_assert!((f - g).abs() <= 1e-9 * f.abs(), "{} vs {}", f, g);
        }

        #[test]
        fn mutual_info_bounds(
            data in proptest::collection::vec((-10.0f64..10.0, 0u8..2), 2..60),
            bins in 1usize..20,
        ) {
            let x: Vec<f64> = data.iter().map(|d| d.0).collect();
            let y: Vec<u8> = data.iter().map(|d| d.1).collect();
            let mi = mutual_info_scores(&ds1(&x, &y), bins).unwrap().scores[0];
            let bound = (bins as f64).ln().min(std::f64::consts::LN_2);
            prop_assert!(mi >= 0.0 && mi <= bound + 1e-12);
        }

        #[test]
        fn top_k_nested(v in proptest::collection::vec(0u8..5, 2..30), k in 1usize..29) {
            let s = scores(&v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>());
            prop_assume!(k < v.len());
            let a = select_top_k(&s, k).unwrap();
            let b = select_top_k(&s, k + 1).unwrap();
            prop_assert_eq!(a.count(), k);
            prop_assert!(a.indices().iter().all(|&i| b.get(i)));
        }
    }
}

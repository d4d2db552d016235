use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::scalar::Scalar;

/// Relative variance smoothing: `1e-9` times the largest per-feature variance.
pub const VAR_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel<T> {
    pub n_features: usize,
    /// Class priors `[P(0), P(1)]`.
    pub priors: [T; 2],
    /// Per-class feature means, `[class][feature]`.
    pub means: [Vec<T>; 2],
    /// Per-class feature variances including the smoothing term.
    pub variances: [Vec<T>; 2],
}

fn population_mean_var<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> (T, T) {
    let n = T::from_count(values.clone().count());
    let mean = values.clone().sum::<T>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var)
}

pub fn train_gaussian_nb<T: Scalar>(train: &Dataset<T>) -> Result<GnbModel<T>> {
    train.require_both_classes()?;
    let d = train.n_features();
    let counts = train.class_counts();
    let n = T::from_count(train.n_samples());

    let mut max_var = T::zero();
    for j in 0..d {
        let (_, v) = population_mean_var((0..train.n_samples()).map(|i| train.value(i, j)));
        max_var = max_var.max(v);
    }
    // all-constant input still needs a positive variance
    let epsilon = if max_var > T::zero() {
        T::lit(VAR_SMOOTHING) * max_var
    } else {
        T::lit(VAR_SMOOTHING)
    };

    let mut means = [Vec::with_capacity(d), Vec::with_capacity(d)];
    let mut variances = [Vec::with_capacity(d), Vec::with_capacity(d)];
    for c in 0..2u8 {
        let rows: Vec<usize> = (0..train.n_samples()).filter(|&i| train.labels()[i] == c).collect();
        for j in 0..d {
            let (m, v) = population_mean_var(rows.iter().map(|&i| train.value(i, j)));
            means[usize::from(c)].push(m);
            variances[usize::from(c)].push(v + epsilon);
        }
    }
    Ok(GnbModel {
        n_features: d,
        priors: [T::from_count(counts[0]) / n, T::from_count(counts[1]) / n],
        means,
        variances,
    })
}

impl<T: Scalar> GnbModel<T> {
    /// Joint log-likelihood `ln P(c) + sum_j ln N(x_j; mu_cj, var_cj)`.
    pub fn joint_log_likelihood(&self, x: &[T]) -> [T; 2] {
        let two_pi = T::lit(2.0 * std::f64::consts::PI);
        let half = T::lit(0.5);
        let mut out = [T::zero(); 2];
        for (c, o) in out.iter_mut().enumerate() {
            let mut ll = self.priors[c].ln();
            for (j, &v) in x.iter().enumerate() {
                let var = self.variances[c][j];
                let diff = v - self.means[c][j];
                ll -= half * (two_pi * var).ln() + half * diff * diff / var;
            }
            *o = ll;
        }
        out
    }

    /// Posterior probability of class 1.
    pub fn predict_proba(&self, x: &[T]) -> T {
        let [l0, l1] = self.joint_log_likelihood(x);
        T::one() / (T::one() + (l0 - l1).exp())
    }

    /// Class 1 only when its log-likelihood is strictly larger.
    pub fn predict_label(&self, x: &[T]) -> u8 {
        let [l0, l1] = self.joint_log_likelihood(x);
        u8::from(l1 > l0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters() -> Dataset<f64> {
        let rows: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 10.0]
            .iter()
            .enumerate()
            .map(|(i, &c)| vec![c + [-1.0, 1.0][i % 2]])
            .collect();
        Dataset::from_rows(&rows, vec![0, 0, 0, 0, 1, 1, 1, 1]).unwrap()
    }

    #[test]
    fn nearest_cluster_wins() {
        let m = train_gaussian_nb(&two_clusters()).unwrap();
        // class means 0 and 10, both variances 1 plus 1e-9 * 26 smoothing:
        // at x=1 the log-likelihood gap is (81 - 1) / 2 = 40 nats, shrunk by it
        assert_eq!(m.predict_label(&[1.0]), 0);
        let [l0, l1] = m.joint_log_likelihood(&[1.0]);
        assert!((l0 - l1 - 40.0 / (1.0 + 26e-9)).abs() < 1e-12);
        assert_eq!(m.predict_label(&[10.0]), 1);
        assert!(m.predict_proba(&[10.0]) > 0.99);
    }

    #[test]
    fn equidistant_point_goes_to_class_zero() {
        let m = train_gaussian_nb(&two_clusters()).unwrap();
        assert_eq!(m.predict_label(&[5.0]), 0);
        assert_eq!(m.predict_proba(&[5.0]), 0.5);
    }

    #[test]
    fn duplicated_samples_give_same_statistics() {
        let ds = Dataset::<f64>::from_rows(
            &[vec![0.5, 3.0], vec![1.5, -2.0], vec![2.25, 0.125], vec![-1.0, 4.0]],
            vec![0, 1, 0, 1],
        )
        .unwrap();
        let a = train_gaussian_nb(&ds).unwrap();
        let b = train_gaussian_nb(&ds.select_rows(&[0, 1, 2, 3, 0, 1, 2, 3])).unwrap();
        assert_eq!(a.priors, b.priors);
        for c in 0..2 {
            for j in 0..2 {
                assert!((a.means[c][j] - b.means[c][j]).abs() <= 1e-12);
                assert!((a.variances[c][j] - b.variances[c][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn affine_rescaling_keeps_decisions() {
        let mut r = crate::rng::seeded(8);
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![r.gen_range(-3.0..3.0), r.gen_range(0.0..1.0)])
            .collect();
        let labels: Vec<u8> = rows.iter().map(|x| u8::from(x[0] + x[1] > 0.4)).collect();
        let ds = Dataset::from_rows(&rows, labels.clone()).unwrap();
        // one common scale keeps the relative smoothing unchanged
        let (a, b) = ([2.5, -2.5], [-4.0, 10.0]);
        let tf = |x: &[f64]| vec![a[0] * x[0] + b[0], a[1] * x[1] + b[1]];
        let tds = Dataset::from_rows(&rows.iter().map(|x| tf(x)).collect::<Vec<_>>(), labels).unwrap();
        let m = train_gaussian_nb(&ds).unwrap();
        let tm = train_gaussian_nb(&tds).unwrap();
        for _ in 0..200 {
            let x = [r.gen_range(-3.0..3.0), r.gen_range(0.0..1.0)];
            let p = m.predict_proba(&x);
            let tp = tm.predict_proba(&tf(&x));
            assert!((p - tp).abs() < 1e-6, "{p} vs {tp}");
            if (p - 0.5).abs() > 1e-6 {
                assert_eq!(m.predict_label(&x), tm.predict_label(&tf(&x)));
            }
        }
    }

    #[test]
    fn single_class_rejected() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0]], vec![1, 1]).unwrap();
        assert!(train_gaussian_nb(&ds).is_err());
    }
}

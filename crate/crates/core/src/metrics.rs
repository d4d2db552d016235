//! Binary classification metrics: confusion matrix, accuracy / precision /
//! recall / F1, ROC curve and AUC. Class `1` is the positive class.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cmp_scalar, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics<T> {
    pub accuracy: T,
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

pub fn confusion_matrix(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidParam("no samples to evaluate".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            (0, 0) => cm.tn += 1,
            (bad, 0 | 1) | (_, bad) => return Err(Error::BadLabel(bad)),
        }
    }
    Ok(cm)
}

fn ratio<T: Scalar>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::lit(num as f64) / T::lit(den as f64)
    }
}

/// Empty denominators yield 0 instead of an error.
pub fn classification_metrics<T: Scalar>(cm: &ConfusionMatrix) -> ClassificationMetrics<T> {
    let accuracy = ratio(cm.tp + cm.tn, cm.total());
    let precision: T = ratio(cm.tp, cm.tp + cm.fp);
    let recall: T = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if precision + recall == T::zero() {
        T::zero()
    } else {
        T::lit(2.0) * (precision * recall) / (precision + recall)
    };
    ClassificationMetrics {
        accuracy,
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<T> {
    /// Scores `>= threshold` are called positive. The first point uses +inf.
    pub threshold: T,
    pub fpr: T,
    pub tpr: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve<T> {
    pub points: Vec<RocPoint<T>>,
}

fn check_binary_scores<T>(y_true: &[u8], scores: &[T]) -> Result<(u64, u64)> {
    if y_true.len() != scores.len() {
        return Err(Error::LengthMismatch(y_true.len(), scores.len()));
    }
    let mut pos = 0u64;
    for &y in y_true {
        match y {
            0 => {}
            1 => pos += 1,
            bad => return Err(Error::BadLabel(bad)),
        }
    }
    let neg = y_true.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// ROC curve over the distinct scores in descending order. Tied scores form
/// a single step, so a block of ties becomes one diagonal segment.
pub fn roc_curve<T: Scalar>(y_true: &[u8], scores: &[T]) -> Result<RocCurve<T>> {
    let (pos, neg) = check_binary_scores(y_true, scores)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParam("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| cmp_scalar(scores[b], scores[a]));

    let mut points = vec![RocPoint {
        threshold: T::infinity(),
        fpr: T::zero(),
        tpr: T::zero(),
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: ratio(fp, neg),
            tpr: ratio(tp, pos),
        });
    }
    Ok(RocCurve { points })
}

impl<T: Scalar> RocCurve<T> {
    /// Trapezoidal area.
    pub fn area(&self) -> T {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / T::lit(2.0))
            .sum()
    }

    /// `threshold,fpr,tpr` rows; the leading +inf threshold is written `inf`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "threshold,fpr,tpr")?;
        for p in &self.points {
            writeln!(w, "{:?},{:?},{:?}", p.threshold, p.fpr, p.tpr)?;
        }
        Ok(())
    }
}

/// Area under the ROC curve by trapezoids.
pub fn auc<T: Scalar>(y_true: &[u8], scores: &[T]) -> Result<T> {
    Ok(roc_curve(y_true, scores)?.area())
}

/// Mann-Whitney form of the AUC: (concordant + ties/2) / (pos * neg).
/// Quadratic; intended as a cross-check.
pub fn auc_rank_statistic<T: Scalar>(y_true: &[u8], scores: &[T]) -> Result<T> {
    let (pos, neg) = check_binary_scores(y_true, scores)?;
    let (mut concordant, mut ties) = (0u64, 0u64);
    for (i, &yi) in y_true.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in y_true.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            if scores[i] > scores[j] {
                concordant += 1;
            } else if scores[i] == scores[j] {
                ties += 1;
            }
        }
    }
    Ok(T::lit((2 * concordant + ties) as f64) / T::lit((2 * pos * neg) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_small_example() {
        let cm = confusion_matrix(&[1, 0, 1], &[1, 0, 0]).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(1, 0, 1, 1));
    }

    #[test]
    fn perfect_and_flipped_predictions() {
        let y = [1, 0, 0, 1, 1, 0, 1];
        let cm = confusion_matrix(&y, &y).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        let flipped: Vec<u8> = y.iter().map(|&v| 1 - v).collect();
        let f = confusion_matrix(&y, &flipped).unwrap();
        assert_eq!((f.tp, f.fn_, f.tn, f.fp), (cm.fn_, cm.tp, cm.fp, cm.tn));
        let m = classification_metrics::<f64>(&cm);
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(
            confusion_matrix(&[1, 0], &[1]),
            Err(Error::LengthMismatch(2, 1))
        ));
        assert!(matches!(confusion_matrix(&[1, 2], &[1, 0]), Err(Error::BadLabel(2))));
        assert!(matches!(confusion_matrix(&[1, 0], &[3, 0]), Err(Error::BadLabel(3))));
    }

    #[test]
    fn table_three_counts() {
        let m = classification_metrics::<f64>(&ConfusionMatrix::new(2121, 180, 120, 778));
        assert!((m.accuracy - 0.90622).abs() < 5e-6);
        assert!((m.precision - 0.92177).abs() < 5e-6);
        assert!((m.recall - 0.94645).abs() < 5e-6);
        assert!((m.f1 - 0.93395).abs() < 5e-6);
    }

    #[test]
    fn degenerate_denominators() {
        let m = classification_metrics::<f64>(&ConfusionMatrix::new(0, 0, 3, 2));
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.accuracy, 0.4);
    }

    #[test]
    fn roc_examples() {
        let y = [0, 1, 1, 0];
        let s = [0.1, 0.4, 0.35, 0.8];
        let roc = roc_curve(&y, &s).unwrap();
        // thresholds inf, .8, .4, .35, .1 swept by hand
        let pts: Vec<(f64, f64)> = roc.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(pts, vec![(0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]);
        assert_eq!(auc(&y, &s).unwrap(), 0.5);
        assert_eq!(auc_rank_statistic(&y, &s).unwrap(), 0.5);

        let flat = roc_curve(&y, &[0.3; 4]).unwrap();
        assert_eq!(flat.points.len(), 2);
        assert_eq!((flat.points[1].fpr, flat.points[1].tpr), (1.0, 1.0));
        assert_eq!(flat.area(), 0.5);

        let perfect = roc_curve(&y, &[0.0, 0.9, 0.8, 0.1]).unwrap();
        assert!(perfect.points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(perfect.area(), 1.0);
    }

    #[test]
    fn roc_requires_both_classes() {
        assert!(matches!(roc_curve(&[1, 1], &[0.1, 0.2]), Err(Error::SingleClass)));
        assert!(matches!(auc(&[0, 0], &[0.1, 0.2]), Err(Error::SingleClass)));
    }

    proptest! {
        #[test]
        fn trapezoid_matches_rank_statistic(
            data in proptest::collection::vec((0u8..2, 0u32..20), 2..60)
        ) {
            let y: Vec<u8> = data.iter().map(|d| d.0).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let s: Vec<f64> = data.iter().map(|d| f64::from(d.1) / 20.0).collect();
            let a = auc(&y, &s).unwrap();
            let b = auc_rank_statistic(&y, &s).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            let roc = roc_curve(&y, &s).unwrap();
            for w in roc.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
            let last = roc.points.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            // strictly increasing transform
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert!((auc(&y, &t).unwrap() - a).abs() <= 1e-12);
        }
    }
}

//! Labelled feature matrices, CSV ingestion, stratified splitting and
//! feature masking.
//!
//! Label encoding is fixed: `ALL` (blast) is the positive class `1`, `HEM`
//! (normal) is the negative class `0`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Row-major feature matrix with binary labels and unique sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    labels: Vec<u8>,
    ids: Vec<String>,
    n_features: usize,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset, checking every invariant (finite values, binary
    /// labels, unique ids, consistent lengths).
    pub fn new(features: Vec<T>, n_features: usize, labels: Vec<u8>, ids: Vec<String>) -> Result<Self> {
        let n = labels.len();
        if ids.len() != n {
            return Err(Error::InvalidDataset(format!("{} ids for {} labels", ids.len(), n)));
        }
        if features.len() != n * n_features {
            return Err(Error::InvalidDataset(format!(
                "feature buffer of length {} is not {} x {}",
                features.len(),
                n,
                n_features
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::BadLabel(bad));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                row: pos / n_features.max(1),
                column: pos % n_features.max(1),
            });
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if id.is_empty() {
                return Err(Error::InvalidDataset("empty sample id".into()));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            features,
            labels,
            ids,
            n_features,
        })
    }

    /// Like [`Dataset::new`] with ids `s0, s1, ...`.
    pub fn with_default_ids(features: Vec<T>, n_features: usize, labels: Vec<u8>) -> Result<Self> {
        let ids = (0..labels.len()).map(|i| format!("s{i}")).collect();
        Self::new(features, n_features, labels, ids)
    }

    pub fn from_rows(rows: &[Vec<T>], labels: Vec<u8>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::RaggedRow {
                row: r,
                expected: d,
                found: rows[r].len(),
            });
        }
        Self::with_default_ids(rows.concat(), d, labels)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.features
            .chunks_exact(self.n_features.max(1))
            .take(self.n_samples())
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> T {
        self.features[row * self.n_features + col]
    }

    pub fn column(&self, col: usize) -> Vec<T> {
        (0..self.n_samples()).map(|r| self.value(r, col)).collect()
    }

    /// Sample counts `[class 0, class 1]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - pos, pos]
    }

    pub fn has_both_classes(&self) -> bool {
        let [neg, pos] = self.class_counts();
        neg > 0 && pos > 0
    }

    pub(crate) fn require_both_classes(&self) -> Result<()> {
        if self.has_both_classes() {
            Ok(())
        } else {
            Err(Error::SingleClass)
        }
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let d = self.n_features;
        let mut features = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            n_features: d,
        }
    }

    /// Replaces the feature values, keeping labels and ids.
    pub fn with_features(&self, features: Vec<T>, n_features: usize) -> Result<Self> {
        Self::new(features, n_features, self.labels.clone(), self.ids.clone())
    }
}

/// Boolean inclusion vector over feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureMask(Vec<bool>);

impl FeatureMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn all(d: usize) -> Self {
        Self(vec![true; d])
    }

    pub fn none(d: usize) -> Self {
        Self(vec![false; d])
    }

    pub fn from_indices(d: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; d];
        for &i in indices {
            if i >= d {
                return Err(Error::InvalidParam(format!("feature index {i} >= {d}")));
            }
            bits[i] = true;
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.0.iter().any(|&b| b)
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.0[i] = v;
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
    }

    /// Maps a mask over the columns this mask kept back onto the original
    /// feature space.
    pub fn expand(&self, inner: &FeatureMask) -> Result<FeatureMask> {
        let kept = self.indices();
        if inner.len() != kept.len() {
            return Err(Error::MaskLength {
                mask: inner.len(),
                features: kept.len(),
            });
        }
        let mut bits = vec![false; self.len()];
        for (j, &i) in kept.iter().enumerate() {
            bits[i] = inner.get(j);
        }
        Ok(FeatureMask(bits))
    }

    pub fn and(&self, other: &FeatureMask) -> FeatureMask {
        FeatureMask(self.0.iter().zip(&other.0).map(|(&a, &b)| a && b).collect())
    }
}

/// Test share and seed for a stratified holdout split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub t_percent: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            t_percent: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_percent > 0.0 && self.t_percent < 1.0) {
            return Err(Error::InvalidSplit(format!(
                "t_percent {} outside (0, 1)",
                self.t_percent
            )));
        }
        Ok(())
    }
}

/// Per-class test counts for a stratified split of class sizes `sizes`.
///
/// Each class gets `round(t * size)`; if those do not add up to
/// `round(t * n)`, the largest class absorbs the difference. Counts are then
/// kept inside `1..size` so both partitions contain every class.
pub fn stratified_test_counts(sizes: [usize; 2], t_percent: f64) -> [usize; 2] {
    let n = sizes[0] + sizes[1];
    let mut counts = sizes.map(|s| (t_percent * s as f64).round() as usize);
    let target = (t_percent * n as f64).round() as usize;
    let largest = if sizes[1] >= sizes[0] { 1 } else { 0 };
    let total = counts[0] + counts[1];
    if total < target {
        counts[largest] += target - total;
    } else if total > target {
        counts[largest] -= (total - target).min(counts[largest]);
    }
    for c in 0..2 {
        counts[c] = counts[c].clamp(1, sizes[c] - 1);
    }
    counts
}

/// Splits `ds` into `(train, test)`. Rows of both parts keep their original
/// relative order; which rows go to test is decided by a seeded per-class
/// shuffle.
pub fn stratified_split<T: Scalar>(ds: &Dataset<T>, spec: &SplitSpec) -> Result<(Dataset<T>, Dataset<T>)> {
    let (train_idx, test_idx) = stratified_split_indices(ds.labels(), spec)?;
    Ok((ds.select_rows(&train_idx), ds.select_rows(&test_idx)))
}

/// Row indices `(train, test)`, each sorted ascending.
pub fn stratified_split_indices(labels: &[u8], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[usize::from(l)].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::InvalidSplit(format!(
                "class {c} has {} samples; at least 2 required",
                members.len()
            )));
        }
    }
    let counts = stratified_test_counts([by_class[0].len(), by_class[1].len()], spec.t_percent);
    let mut rng = rng::seeded(spec.seed);
    let mut is_test = vec![false; labels.len()];
    for (members, &k) in by_class.iter_mut().zip(&counts) {
        members.shuffle(&mut rng);
        for &i in &members[..k] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| is_test[i]);
    Ok((train, test))
}

/// Keeps the columns whose mask bit is set, in original order.
pub fn apply_mask<T: Scalar>(ds: &Dataset<T>, mask: &FeatureMask) -> Result<Dataset<T>> {
    if mask.len() != ds.n_features() {
        return Err(Error::MaskLength {
            mask: mask.len(),
            features: ds.n_features(),
        });
    }
    let keep = mask.indices();
    if keep.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut features = Vec::with_capacity(ds.n_samples() * keep.len());
    for row in ds.rows() {
        features.extend(keep.iter().map(|&j| row[j]));
    }
    Ok(Dataset {
        features,
        labels: ds.labels.clone(),
        ids: ds.ids.clone(),
        n_features: keep.len(),
    })
}

fn parse_label(token: &str, row: usize) -> Result<u8> {
    match token.trim() {
        "ALL" | "1" => Ok(1),
        "HEM" | "0" => Ok(0),
        other => Err(Error::UnknownLabel {
            row,
            token: other.to_string(),
        }),
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

fn open_reader(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    Ok(if is_gz(path) {
        Box::new(GzDecoder::new(reader))
    } else {
        Box::new(reader)
    })
}

/// Loads a feature CSV (`id,label,f0,...,f{d-1}`), gzip-compressed when the
/// path ends in `.gz`.
pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    read_csv(open_reader(path)?)
}

pub fn read_csv<T: Scalar, R: Read>(reader: R) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(Error::BadHeader(
            "expected `id,label,f0,...` with at least one feature column".into(),
        ));
    }
    for (j, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::BadHeader(format!(
                "column {} is {:?}, expected \"f{j}\"",
                j + 2,
                name
            )));
        }
    }
    let d = header.len() - 2;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != d + 2 {
            return Err(Error::RaggedRow {
                row,
                expected: d + 2,
                found: record.len(),
            });
        }
        let id = record[0].trim();
        if id.is_empty() {
            return Err(Error::MissingId { row });
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        ids.push(id.to_string());
        labels.push(parse_label(&record[1], row)?);
        for (column, field) in record.iter().skip(2).enumerate() {
            let v: T = field.trim().parse().map_err(|_| Error::NonNumericFeature {
                row,
                column,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row, column });
            }
            features.push(v);
        }
    }
    Dataset::new(features, d, labels, ids)
}

/// Writes the dataset as CSV with shortest round-trip float formatting.
pub fn save_dataset<T: Scalar>(ds: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let buf = BufWriter::new(file);
    if is_gz(path) {
        let mut enc = GzEncoder::new(buf, Compression::default());
        write_csv(ds, &mut enc).map_err(|e| Error::io(path, e))?;
        enc.finish().and_then(|mut w| w.flush()).map_err(|e| Error::io(path, e))
    } else {
        let mut buf = buf;
        write_csv(ds, &mut buf).map_err(|e| Error::io(path, e))?;
        buf.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn write_csv<T: Scalar, W: Write>(ds: &Dataset<T>, w: &mut W) -> std::io::Result<()> {
    write!(w, "id,label")?;
    for j in 0..ds.n_features() {
        write!(w, ",f{j}")?;
    }
    writeln!(w)?;
    for (i, row) in ds.rows().enumerate() {
        let label = if ds.labels()[i] == 1 { "ALL" } else { "HEM" };
        write!(w, "{},{}", ds.ids()[i], label)?;
        for v in row {
            // Debug formatting is the shortest representation that parses
            // back to the same bits.
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> Dataset<f64> {
        Dataset::from_rows(
            &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]],
            vec![1, 0, 1],
        )
        .unwrap()
    }

    fn labels(neg: usize, pos: usize) -> Vec<u8> {
        let mut l = vec![0u8; neg];
        l.extend(std::iter::repeat_n(1, pos));
        l
    }

    #[test]
    fn label_tokens_map_to_binary() {
        let csv = "id,label,f0\na,ALL,0.5\nb,HEM,1.5\n";
        let ds: Dataset<f64> = read_csv(csv.as_bytes()).unwrap();
        assert_eq!(ds.labels(), &[1, 0]);
        let csv = "id,label,f0\na,0,0.5\nb,1,1.5\n";
        let ds: Dataset<f64> = read_csv(csv.as_bytes()).unwrap();
        assert_eq!(ds.labels(), &[0, 1]);
    }

    #[test]
    fn nan_is_rejected() {
        let csv = "id,label,f0,f1\na,ALL,0.5,NaN\n";
        let err = read_csv::<f64, _>(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteFeature { row: 0, column: 1 }));
        let csv = "id,label,f0\na,ALL,inf\n";
        assert!(matches!(
            read_csv::<f64, _>(csv.as_bytes()).unwrap_err(),
            Error::NonFiniteFeature { .. }
        ));
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let cases: &[(&str, fn(&Error) -> bool)] = &[
            ("id,label,f0\na,ALL,x\n", |e| {
                matches!(e, Error::NonNumericFeature { .. })
            }),
            ("id,label,f0\na,AML,1\n", |e| matches!(e, Error::UnknownLabel { .. })),
            ("id,label,f0\na,ALL,1\na,HEM,2\n", |e| {
                matches!(e, Error::DuplicateId(_))
            }),
            ("id,label,f0\n,ALL,1\n", |e| matches!(e, Error::MissingId { .. })),
            ("id,label,f0,f1\na,ALL,1\n", |e| matches!(e, Error::RaggedRow { .. })),
            ("id,label,x0\na,ALL,1\n", |e| matches!(e, Error::BadHeader(_))),
            ("label,id,f0\nALL,a,1\n", |e| matches!(e, Error::BadHeader(_))),
        ];
        for (csv, check) in cases {
            let err = read_csv::<f64, _>(csv.as_bytes()).unwrap_err();
            assert!(check(&err), "{csv:?} gave {err:?}");
        }
    }

    #[test]
    fn csv_round_trip_plain_and_gz() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::from_rows(
            &[vec![0.1, -1e-300, 1.0 / 3.0], vec![f64::MAX, 5e-324, -0.0]],
            vec![0, 1],
        )
        .unwrap();
        for name in ["d.csv", "d.csv.gz"] {
            let p = dir.path().join(name);
            save_dataset(&ds, &p).unwrap();
            let back: Dataset<f64> = load_dataset(&p).unwrap();
            assert_eq!(back, ds);
            for (a, b) in back.features().iter().zip(ds.features()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn split_counts_follow_rounding_rule() {
        assert_eq!(stratified_test_counts([40, 60], 0.2), [8, 12]);
        // 0.25*10=2.5->3, 0.25*6=1.5->2, total 5 vs round(4.0)=4: largest class gives one back
        assert_eq!(stratified_test_counts([6, 10], 0.25), [2, 2]);
    }

    #[test]
    fn split_sizes_60_40() {
        let ds = Dataset::<f64>::with_default_ids(vec![0.0; 100], 1, labels(40, 60)).unwrap();
        let spec = SplitSpec {
            t_percent: 0.2,
            seed: 3,
        };
        let (train, test) = stratified_split(&ds, &spec).unwrap();
        assert_eq!(test.class_counts(), [8, 12]);
        assert_eq!(train.class_counts(), [32, 48]);
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let ds = Dataset::<f64>::with_default_ids(vec![0.0; 10], 1, labels(5, 5)).unwrap();
        for t in [0.0, 1.0, -0.1, f64::NAN] {
            let err = stratified_split(&ds, &SplitSpec { t_percent: t, seed: 0 }).unwrap_err();
            assert!(matches!(err, Error::InvalidSplit(_)));
        }
        let ds = Dataset::<f64>::with_default_ids(vec![0.0; 6], 1, labels(5, 1)).unwrap();
        assert!(matches!(
            stratified_split(&ds, &SplitSpec::default()).unwrap_err(),
            Error::InvalidSplit(_)
        ));
    }

    #[test]
    fn split_is_deterministic() {
        let ds = Dataset::<f64>::with_default_ids((0..50).map(f64::from).collect(), 1, labels(20, 30)).unwrap();
        let spec = SplitSpec {
            t_percent: 0.3,
            seed: 11,
        };
        let a = stratified_split(&ds, &spec).unwrap();
        let b = stratified_split(&ds, &spec).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&ds, &SplitSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.1.ids(), c.1.ids());
    }

    #[test]
    fn mask_examples() {
        let ds = small();
        assert_eq!(apply_mask(&ds, &FeatureMask::all(3)).unwrap(), ds);
        let m = apply_mask(&ds, &FeatureMask::new(vec![true, false, true])).unwrap();
        assert_eq!(m.n_features(), 2);
        assert_eq!(m.row(1), &[4.0, 6.0]);
        assert_eq!(m.labels(), ds.labels());
        assert_eq!(m.ids(), ds.ids());
        assert!(matches!(apply_mask(&ds, &FeatureMask::none(3)), Err(Error::EmptyMask)));
        assert!(matches!(
            apply_mask(&ds, &FeatureMask::all(2)),
            Err(Error::MaskLength { .. })
        ));
    }

    proptest! {
        #[test]
        fn split_is_stratified_partition(neg in 2usize..40, pos in 2usize..40, t in 0.05f64..0.95, seed: u64) {
            let n = neg + pos;
            let ds = Dataset::<f64>::with_default_ids((0..n).map(|i| i as f64).collect(), 1, labels(neg, pos)).unwrap();
            let (train, test) = stratified_split(&ds, &SplitSpec { t_percent: t, seed }).unwrap();
            let mut all: Vec<&String> = train.ids().iter().chain(test.ids()).collect();
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(train.n_samples() + test.n_samples(), n);
            let tc = test.class_counts();
            for (c, size) in [neg, pos].into_iter().enumerate() {
                let ideal = t * size as f64;
                prop_assert!((tc[c] as f64 - ideal).abs() <= 1.5, "class {} got {} vs {}", c, tc[c], ideal);
                prop_assert!(tc[c] >= 1 && tc[c] < size);
            }
        }

        #[test]
        fn nested_masks_compose(bits1 in proptest::collection::vec(any::<bool>(), 1..12), seed: u64) {
            prop_assume!(bits1.iter().any(|&b| b));
            let d = bits1.len();
            let ds = Dataset::<f64>::from_rows(
                &(0..4).map(|r| (0..d).map(|c| (r * 100 + c) as f64).collect()).collect::<Vec<_>>(),
                vec![0, 1, 0, 1],
            ).unwrap();
            let m1 = FeatureMask::new(bits1);
            let inner_bits: Vec<bool> = (0..m1.count()).map(|j| (seed >> (j % 64)) & 1 == 1).collect();
            prop_assume!(inner_bits.iter().any(|&b| b));
            let m2 = FeatureMask::new(inner_bits);
            let stepwise = apply_mask(&apply_mask(&ds, &m1).unwrap(), &m2).unwrap();
            let combined = apply_mask(&ds, &m1.and(&m1.expand(&m2).unwrap())).unwrap();
            prop_assert_eq!(stepwise, combined);
        }

        #[test]
        fn csv_round_trip_is_bit_exact(vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 6)) {
            let ds = Dataset::from_rows(&[vals[..3].to_vec(), vals[3..].to_vec()], vec![1, 0]).unwrap();
            let mut buf = Vec::new();
            write_csv(&ds, &mut buf).unwrap();
            let back: Dataset<f64> = read_csv(buf.as_slice()).unwrap();
            for (a, b) in back.features().iter().zip(ds.features()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

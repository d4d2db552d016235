use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineConfig, StageSeeds};
use crate::error::{Error, Result};
use crate::filters::FilterMethod;
use crate::metaheuristics::SearchAlgo;
use crate::metrics::{ClassificationMetrics, ConfusionMatrix, RocCurve, RocPoint};
use crate::scalar::Scalar;

pub const REPORT_FILE: &str = "report.json";
pub const ROC_FILE: &str = "roc.csv";
pub const SELECTED_FILE: &str = "selected_features.json";
pub const TIMINGS_FILE: &str = "timings.json";
const LOCK_FILE: &str = ".blastsel.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStageReport {
    pub method: FilterMethod,
    pub k: usize,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStageReport<T> {
    pub algo: SearchAlgo,
    /// Indices into the original feature columns.
    pub selected: Vec<usize>,
    pub fitness: T,
    pub history: Vec<T>,
    pub evaluations: usize,
}

/// Outcome of one pipeline run. Wall-clock timings live in [`Timings`] so
/// that the report itself is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport<T> {
    pub artifact: String,
    pub version: String,
    pub config: PipelineConfig,
    pub seeds: StageSeeds,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub filter: Option<FilterStageReport>,
    pub search: Option<SearchStageReport<T>>,
    pub selected_features: Vec<usize>,
    pub confusion_matrix: ConfusionMatrix,
    pub metrics: ClassificationMetrics<T>,
    pub auc: T,
    pub roc_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
}

impl Timings {
    pub fn record(&mut self, stage: &str, seconds: f64) {
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
    }

    pub fn stage_sum(&self) -> f64 {
        self.stages.iter().map(|s| s.seconds).sum()
    }
}

#[derive(Serialize)]
struct SelectedFeatures<'a> {
    filter: Option<&'a [usize]>,
    search: Option<&'a [usize]>,
    selected: &'a [usize],
}

fn to_json<S: Serialize>(value: &S) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes `report.json`, `roc.csv`, `selected_features.json` and, if given,
/// `timings.json`. Each file is written to a temporary name and renamed into
/// place once all of them were written; on failure nothing is left behind.
pub fn emit_report<T: Scalar>(
    report: &EvaluationReport<T>,
    roc: &RocCurve<T>,
    timings: Option<&Timings>,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut roc_bytes = Vec::new();
    roc.write_csv(&mut roc_bytes)
        .map_err(|e| Error::io(dir.join(ROC_FILE), e))?;
    let selected = SelectedFeatures {
        filter: report.filter.as_ref().map(|f| f.selected.as_slice()),
        search: report.search.as_ref().map(|s| s.selected.as_slice()),
        selected: &report.selected_features,
    };
    let mut files = vec![
        (REPORT_FILE, to_json(report)?),
        (ROC_FILE, roc_bytes),
        (SELECTED_FILE, to_json(&selected)?),
    ];
    if let Some(t) = timings {
        files.push((TIMINGS_FILE, to_json(t)?));
    }

    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let result = (|| {
        for (name, bytes) in &files {
            let tmp = dir.join(format!(".{name}.tmp"));
            let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            staged.push((tmp.clone(), dir.join(name)));
            f.write_all(bytes)
                .and_then(|_| f.sync_all())
                .map_err(|e| Error::io(&tmp, e))?;
        }
        for (tmp, dst) in &staged {
            fs::rename(tmp, dst).map_err(|e| Error::io(dst, e))?;
        }
        Ok(())
    })();
    if result.is_err() {
        for (tmp, dst) in &staged {
            let _ = fs::remove_file(tmp);
            let _ = fs::remove_file(dst);
        }
    }
    result
}

/// Parses a `roc.csv` written by [`emit_report`].
pub fn read_roc_csv(path: impl AsRef<Path>) -> Result<RocCurve<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 {
            if line != "threshold,fpr,tpr" {
                return Err(Error::BadHeader(line));
            }
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidDataset(format!("bad roc row {i}: {line}")))?;
        if v.len() != 3 {
            return Err(Error::RaggedRow {
                row: i,
                expected: 3,
                found: v.len(),
            });
        }
        points.push(RocPoint {
            threshold: v[0],
            fpr: v[1],
            tpr: v[2],
        });
    }
    Ok(RocCurve { points })
}

/// Marks an output directory as in use by one run. Released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::InvalidParam(format!(
                "output directory {} is in use by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::roc_curve;

    #[test]
    fn roc_csv_round_trip_is_exact() {
        let y = [0, 1, 1, 0, 1];
        let s = [0.1, 0.4, 0.35, 0.8, 1.0 / 3.0];
        let roc = roc_curve(&y, &s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("roc.csv");
        let mut bytes = Vec::new();
        roc.write_csv(&mut bytes).unwrap();
        fs::write(&p, bytes).unwrap();
        let back = read_roc_csv(&p).unwrap();
        assert_eq!(back, roc);
        assert_eq!(back.area(), roc.area());
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(OutputLock::acquire(dir.path()).is_err());
        drop(lock);
        OutputLock::acquire(dir.path()).unwrap();
    }
}

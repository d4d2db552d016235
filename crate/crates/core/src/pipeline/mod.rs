//! End-to-end run: split, filter ranking, wrapper search, final classifier
//! and evaluation, driven by one JSON config and one master seed.

mod report;
mod synthetic;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use report::{
    emit_report, read_roc_csv, EvaluationReport, FilterStageReport, OutputLock, SearchStageReport, Timings,
};
pub use synthetic::{generate_synthetic, Synthetic, SyntheticSpec};

use crate::classifiers::{ClassifierConfig, TrainedModel};
use crate::dataset::{self, apply_mask, stratified_split_indices, Dataset, FeatureMask, SplitSpec};
use crate::error::{Error, Result};
use crate::filters::{score_features, select_top_k, FilterMethod, FilterOptions};
use crate::metaheuristics::{run_search, SearchConfig, SearchResult};
use crate::metrics::{classification_metrics, confusion_matrix, roc_curve, RocCurve};
use crate::rng::derive_named;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSpec {
    /// CSV (optionally gzipped) in the `id,label,f0,...` layout.
    Path(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterStage {
    pub method: FilterMethod,
    pub k: usize,
    #[serde(flatten)]
    pub options: FilterOptions,
}

impl Default for FilterStage {
    fn default() -> Self {
        Self {
            method: FilterMethod::RfImportance,
            k: 532,
            options: FilterOptions::default(),
        }
    }
}

/// Full pipeline configuration. Seeds inside the sections are ignored: each
/// stage's seed is derived from `seed` and recorded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: InputSpec,
    pub split: SplitSpec,
    /// `None` keeps every feature.
    pub filter: Option<FilterStage>,
    /// `None` skips the wrapper search.
    pub search: Option<SearchConfig>,
    pub final_classifier: ClassifierConfig,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: InputSpec::Synthetic(SyntheticSpec::default()),
            split: SplitSpec::default(),
            filter: Some(FilterStage::default()),
            search: Some(SearchConfig::default()),
            final_classifier: ClassifierConfig::default(),
            seed: 0,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    /// The shipped desk-scale configuration: 2000 x 256 synthetic features
    /// with 10 informative, RF importance top 64, GA-BACO, MLP.
    pub fn bundled_synthetic() -> Self {
        Self {
            filter: Some(FilterStage {
                k: 64,
                ..FilterStage::default()
            }),
            seed: 42,
            ..Self::default()
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&s)?;
        // Relative input paths are relative to the config file.
        if let (InputSpec::Path(p), Some(dir)) = (&mut cfg.input, path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if let Some(s) = &self.search {
            s.fitness.validate()?;
        }
        self.final_classifier.validate()
    }
}

/// Every seed used in a run, derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub master: u64,
    pub synthetic: u64,
    pub split: u64,
    pub filter: u64,
    pub fitness: u64,
    pub search: u64,
    pub classifier: u64,
}

impl StageSeeds {
    pub fn derive(master: u64) -> Self {
        Self {
            master,
            synthetic: derive_named(master, "synthetic"),
            split: derive_named(master, "split"),
            filter: derive_named(master, "filter"),
            fitness: derive_named(master, "fitness"),
            search: derive_named(master, "search"),
            classifier: derive_named(master, "classifier"),
        }
    }
}

/// Everything learned from the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline<T> {
    pub filter_mask: FeatureMask,
    pub filter_scores: Option<Vec<T>>,
    pub search: Option<SearchResult<T>>,
    /// Final mask over the original features.
    pub mask: FeatureMask,
    pub model: TrainedModel<T>,
}

fn timed<R>(timings: &mut Timings, stage: &'static str, f: impl FnOnce() -> Result<R>) -> Result<R> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage));
    timings.record(stage, start.elapsed().as_secs_f64());
    out
}

/// Filter scores in [0, 1] for use as ant heuristic: divided by the largest
/// finite score, infinite scores map to 1.
fn heuristic_from_scores<T: Scalar>(scores: &[T]) -> Vec<f64> {
    let vals: Vec<f64> = scores.iter().map(|s| s.to_f64_lossy().max(0.0)).collect();
    let max = vals.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    vals.iter()
        .map(|&v| {
            if v.is_infinite() {
                1.0
            } else if max > 0.0 {
                v / max
            } else {
                1.0
            }
        })
        .collect()
}

/// Runs every learning stage on `train` only.
pub fn fit_stages<T: Scalar>(
    train: &Dataset<T>,
    cfg: &PipelineConfig,
    seeds: &StageSeeds,
    timings: &mut Timings,
) -> Result<FittedPipeline<T>> {
    let d = train.n_features();
    let (filter_mask, filter_scores) = match &cfg.filter {
        Some(stage) => {
            let mut opts = stage.options.clone();
            opts.forest.seed = seeds.filter;
            let scores = timed(timings, "filter", || score_features(train, stage.method, &opts))?;
            let mask = select_top_k(&scores, stage.k).map_err(|e| e.in_stage("select_top_k"))?;
            (mask, Some(scores.scores))
        }
        None => (FeatureMask::all(d), None),
    };

    let filtered = apply_mask(train, &filter_mask)?;
    let search = match &cfg.search {
        Some(sc) => {
            let mut sc = sc.clone();
            sc.fitness.seed = seeds.fitness;
            sc.fitness.surrogate = sc.fitness.surrogate.with_seed(seeds.fitness);
            if sc.aco.beta > 0.0 && sc.aco.heuristic.is_none() {
                let kept: Vec<T> = match &filter_scores {
                    Some(s) => filter_mask.indices().iter().map(|&j| s[j]).collect(),
                    None => vec![T::one(); d],
                };
                sc.aco.heuristic = Some(heuristic_from_scores(&kept));
            }
            Some(timed(timings, "search", || run_search(&filtered, &sc, seeds.search))?)
        }
        None => None,
    };

    let mask = match &search {
        Some(r) => filter_mask.expand(&r.mask)?,
        None => filter_mask.clone(),
    };
    let final_train = apply_mask(train, &mask)?;
    let classifier = cfg.final_classifier.with_seed(seeds.classifier);
    let model = timed(timings, "train", || classifier.train(&final_train))?;
    Ok(FittedPipeline {
        filter_mask,
        filter_scores,
        search,
        mask,
        model,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineRun<T> {
    pub report: EvaluationReport<T>,
    pub roc: RocCurve<T>,
    pub fitted: FittedPipeline<T>,
    pub timings: Timings,
}

fn load_input<T: Scalar>(cfg: &PipelineConfig, seeds: &StageSeeds) -> Result<Dataset<T>> {
    match &cfg.input {
        InputSpec::Path(p) => dataset::load_dataset(p),
        InputSpec::Synthetic(s) => {
            Ok(generate_synthetic(s.n, s.d, s.n_informative, s.noise, s.seed.unwrap_or(seeds.synthetic))?.dataset)
        }
    }
}

/// Runs every stage in memory and builds the report. Nothing is written.
pub fn run_pipeline_in_memory<T: Scalar>(cfg: &PipelineConfig) -> Result<PipelineRun<T>> {
    let total = Instant::now();
    let mut timings = Timings::default();
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let seeds = StageSeeds::derive(cfg.seed);
    let ds: Dataset<T> = timed(&mut timings, "ingest", || load_input(cfg, &seeds))?;
    run_on_dataset(&ds, cfg, &seeds, &mut timings, total)
}

pub(crate) fn run_on_dataset<T: Scalar>(
    ds: &Dataset<T>,
    cfg: &PipelineConfig,
    seeds: &StageSeeds,
    timings: &mut Timings,
    total: Instant,
) -> Result<PipelineRun<T>> {
    let split = SplitSpec {
        t_percent: cfg.split.t_percent,
        seed: seeds.split,
    };
    let (train_idx, test_idx) = timed(timings, "split", || stratified_split_indices(ds.labels(), &split))?;
    let train = ds.select_rows(&train_idx);
    let test = ds.select_rows(&test_idx);

    let fitted = fit_stages(&train, cfg, seeds, timings)?;

    let start = Instant::now();
    let evaluated = (|| {
        let test_masked = apply_mask(&test, &fitted.mask)?;
        let pred = fitted.model.predict_dataset(&test_masked)?;
        let cm = confusion_matrix(test.labels(), &pred.labels)?;
        let roc = roc_curve(test.labels(), &pred.scores)?;
        Ok::<_, Error>((cm, roc))
    })()
    .map_err(|e| e.in_stage("evaluate"));
    timings.record("evaluate", start.elapsed().as_secs_f64());
    let (cm, roc) = evaluated?;

    let report = EvaluationReport {
        artifact: "blastsel".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        seeds: *seeds,
        n_samples: ds.n_samples(),
        n_features: ds.n_features(),
        n_train: train.n_samples(),
        n_test: test.n_samples(),
        filter: cfg.filter.as_ref().map(|stage| FilterStageReport {
            method: stage.method,
            k: stage.k,
            selected: fitted.filter_mask.indices(),
        }),
        search: fitted
            .search
            .as_ref()
            .zip(cfg.search.as_ref())
            .map(|(r, sc)| SearchStageReport {
                algo: sc.algo,
                selected: fitted.mask.indices(),
                fitness: r.fitness,
                history: r.history.clone(),
                evaluations: r.evaluations,
            }),
        selected_features: fitted.mask.indices(),
        confusion_matrix: cm,
        metrics: classification_metrics(&cm),
        auc: roc.area(),
        roc_points: roc.points.len(),
    };
    timings.total_seconds = total.elapsed().as_secs_f64();
    Ok(PipelineRun {
        report,
        roc,
        fitted,
        timings: std::mem::take(timings),
    })
}

/// Runs the pipeline and, when `output_dir` is set, writes the report files
/// atomically. Any stage error aborts the run and leaves no partial outputs.
pub fn run_pipeline<T: Scalar>(cfg: &PipelineConfig) -> Result<PipelineRun<T>> {
    let _lock = match &cfg.output_dir {
        Some(dir) => Some(OutputLock::acquire(dir).map_err(|e| e.in_stage("output"))?),
        None => None,
    };
    let run = run_pipeline_in_memory(cfg)?;
    if let Some(dir) = &cfg.output_dir {
        emit_report(&run.report, &run.roc, Some(&run.timings), dir).map_err(|e| e.in_stage("emit"))?;
    }
    Ok(run)
}

//! Leukemia blast-cell classification downstream of CNN feature extraction:
//! image preprocessing, filter and metaheuristic feature selection,
//! classical classifiers and evaluation metrics.
//!
//! Numeric types are generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`; the `*32` variants use `f32`.
//!
//! ```
//! use blastsel::{metrics, ConfusionMatrix};
//!
//! let cm = ConfusionMatrix::new(2121, 180, 120, 778);
//! let m = metrics::classification_metrics::<f64>(&cm);
//! assert!((m.accuracy - 0.9062).abs() < 1e-4);
//! ```

pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod filters;
pub mod imgprep;
pub mod metaheuristics;
pub mod metrics;
pub mod pipeline;
pub mod rng;
mod scalar;

pub use dataset::{FeatureMask, SplitSpec};
pub use error::{Error, Result};
pub use metrics::ConfusionMatrix;
pub use scalar::Scalar;

pub type Dataset = dataset::Dataset<f64>;
pub type Dataset32 = dataset::Dataset<f32>;
pub type TrainedModel = classifiers::TrainedModel<f64>;
pub type TrainedModel32 = classifiers::TrainedModel<f32>;
pub type FeatureScores = filters::FeatureScores<f64>;
pub type FeatureScores32 = filters::FeatureScores<f32>;
pub type ClassificationMetrics = metrics::ClassificationMetrics<f64>;
pub type RocCurve = metrics::RocCurve<f64>;
pub type PheromoneTable = metaheuristics::PheromoneTable<f64>;
pub type SearchResult = metaheuristics::SearchResult<f64>;
pub type SearchResult32 = metaheuristics::SearchResult<f32>;
pub type EvaluationReport = pipeline::EvaluationReport<f64>;

//! Binary classifiers: Gaussian naive Bayes, CART decision tree, random
//! forest and a multilayer perceptron, behind one [`TrainedModel`] type.

pub mod forest;
pub mod gnb;
pub mod mlp;
pub mod tree;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{train_random_forest, ForestModel, ForestParams, MaxFeatures};
pub use gnb::{train_gaussian_nb, GnbModel};
pub use mlp::{train_mlp, Activation, MlpModel, MlpParams, Network};
pub use tree::{train_decision_tree, TreeModel, TreeParams};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Mlp,
    #[serde(alias = "tree")]
    Dt,
    #[serde(alias = "forest")]
    Rf,
    Gnb,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Self::Mlp),
            "dt" | "tree" => Ok(Self::Dt),
            "rf" | "forest" => Ok(Self::Rf),
            "gnb" => Ok(Self::Gnb),
            other => Err(Error::InvalidParam(format!("unknown classifier {other:?}"))),
        }
    }
}

/// Classifier kind together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ClassifierConfig {
    Mlp(MlpParams),
    Dt(TreeParams),
    Rf(ForestParams),
    Gnb,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::Mlp(MlpParams::default())
    }
}

impl ClassifierConfig {
    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::Mlp => Self::Mlp(MlpParams::default()),
            ClassifierKind::Dt => Self::Dt(TreeParams::default()),
            ClassifierKind::Rf => Self::Rf(ForestParams::default()),
            ClassifierKind::Gnb => Self::Gnb,
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Self::Mlp(_) => ClassifierKind::Mlp,
            Self::Dt(_) => ClassifierKind::Dt,
            Self::Rf(_) => ClassifierKind::Rf,
            Self::Gnb => ClassifierKind::Gnb,
        }
    }

    /// Same hyperparameters with the seed replaced (GNB has none).
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            Self::Mlp(p) => Self::Mlp(MlpParams { seed, ..p.clone() }),
            Self::Dt(p) => Self::Dt(TreeParams { seed, ..*p }),
            Self::Rf(p) => Self::Rf(ForestParams { seed, ..*p }),
            Self::Gnb => Self::Gnb,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Mlp(p) => p.validate(),
            Self::Dt(p) => p.validate(),
            Self::Rf(p) => p.validate(),
            Self::Gnb => Ok(()),
        }
    }

    pub fn train<T: Scalar>(&self, train: &Dataset<T>) -> Result<TrainedModel<T>> {
        Ok(match self {
            Self::Mlp(p) => TrainedModel::Mlp(train_mlp(train, p)?),
            Self::Dt(p) => TrainedModel::Tree(train_decision_tree(train, p)?),
            Self::Rf(p) => TrainedModel::Forest(train_random_forest(train, p)?),
            Self::Gnb => TrainedModel::Gnb(train_gaussian_nb(train)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel<T> {
    Mlp(MlpModel<T>),
    Tree(TreeModel<T>),
    Forest(ForestModel<T>),
    Gnb(GnbModel<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions<T> {
    pub labels: Vec<u8>,
    /// Class-1 probability per row.
    pub scores: Vec<T>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Self::Mlp(_) => ClassifierKind::Mlp,
            Self::Tree(_) => ClassifierKind::Dt,
            Self::Forest(_) => ClassifierKind::Rf,
            Self::Gnb(_) => ClassifierKind::Gnb,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Self::Mlp(m) => m.n_features(),
            Self::Tree(m) => m.n_features,
            Self::Forest(m) => m.n_features,
            Self::Gnb(m) => m.n_features,
        }
    }

    /// Predicts a row-major matrix `x` with `n_features` columns.
    ///
    /// Labels are `score >= 0.5`, except the forest (majority vote, ties to
    /// 0) and naive Bayes (class 1 only on a strictly larger likelihood).
    pub fn predict(&self, x: &[T], n_features: usize) -> Result<Predictions<T>> {
        let expected = self.n_features();
        if n_features != expected || (n_features > 0 && !x.len().is_multiple_of(n_features)) {
            return Err(Error::WidthMismatch {
                expected,
                found: n_features,
            });
        }
        let rows = || x.chunks_exact(n_features);
        let half = T::lit(0.5);
        let (labels, scores) = match self {
            Self::Mlp(m) => {
                let scores = m.predict_proba(x);
                (scores.iter().map(|&s| u8::from(s >= half)).collect(), scores)
            }
            Self::Tree(t) => {
                let scores: Vec<T> = rows().map(|r| t.leaf_p1(r)).collect();
                (scores.iter().map(|&s| u8::from(s >= half)).collect(), scores)
            }
            Self::Forest(f) => (
                rows().map(|r| f.predict_label(r)).collect(),
                rows().map(|r| f.predict_proba(r)).collect(),
            ),
            Self::Gnb(g) => (
                rows().map(|r| g.predict_label(r)).collect(),
                rows().map(|r| g.predict_proba(r)).collect(),
            ),
        };
        Ok(Predictions { labels, scores })
    }

    pub fn predict_dataset(&self, ds: &Dataset<T>) -> Result<Predictions<T>> {
        self.predict(ds.features(), ds.n_features())
    }
}

pub const MODEL_FORMAT: &str = "blastsel-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument<M> {
    format: String,
    version: u32,
    model: M,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument<Self> = serde_json::from_str(s)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("{} v{}", doc.format, doc.version)));
        }
        Ok(doc.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

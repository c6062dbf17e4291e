//! Black-box classifier contract and the built-in classifiers.
//!
//! Every classifier consumes token-count vectors and exposes only
//! `predict_prob`, the probability of class 1. Trained models are immutable and
//! serialize to a versioned JSON document.

mod forest;
mod knn;
mod logistic;
mod tree;

use std::borrow::Cow;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::LabeledCorpus;
use crate::error::{Error, Result};
use crate::textrepr::{CountVector, Vocabulary};

pub use forest::Forest;
pub use knn::KnnModel;
pub use logistic::{LinearModel, LogisticFit};
pub use tree::{Tree, TreeNode, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained classifier seen from outside: a probability for class 1.
pub trait ProbabilityModel: Send + Sync {
    /// Probability of class 1, always in `[0, 1]`.
    fn predict_prob(&self, x: &CountVector) -> f64;

    fn feature_dim(&self) -> usize;

    fn metadata(&self) -> ModelMetadata {
        ModelMetadata {
            kind: "external".into(),
            hyperparameters: serde_json::Value::Null,
            seed: None,
        }
    }
}

impl<M: ProbabilityModel + ?Sized> ProbabilityModel for &M {
    fn predict_prob(&self, x: &CountVector) -> f64 {
        (**self).predict_prob(x)
    }
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }
    fn metadata(&self) -> ModelMetadata {
        (**self).metadata()
    }
}

impl<M: ProbabilityModel + ?Sized> ProbabilityModel for std::sync::Arc<M> {
    fn predict_prob(&self, x: &CountVector) -> f64 {
        (**self).predict_prob(x)
    }
    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }
    fn metadata(&self) -> ModelMetadata {
        (**self).metadata()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub kind: String,
    pub hyperparameters: serde_json::Value,
    pub seed: Option<u64>,
}

/// Predicted class for a class-1 probability. Exactly 0.5 goes to class 1.
pub fn predicted_class(p: f64) -> u8 {
    (p >= 0.5) as u8
}

/// Wraps any `Fn(&CountVector) -> f64` as a model, e.g. an externally trained SVM.
pub struct FnModel<F> {
    dim: usize,
    kind: String,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&CountVector) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, kind: impl Into<String>, f: F) -> Self {
        FnModel {
            dim,
            kind: kind.into(),
            f,
        }
    }
}

impl<F> ProbabilityModel for FnModel<F>
where
    F: Fn(&CountVector) -> f64 + Send + Sync,
{
    fn predict_prob(&self, x: &CountVector) -> f64 {
        (self.f)(x).clamp(0.0, 1.0)
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn metadata(&self) -> ModelMetadata {
        ModelMetadata {
            kind: self.kind.clone(),
            hyperparameters: serde_json::Value::Null,
            seed: None,
        }
    }
}

/// Count matrix plus binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub rows: Vec<CountVector>,
    pub labels: Vec<u8>,
    pub dim: usize,
}

impl TrainingSet {
    pub fn from_corpus(corpus: &LabeledCorpus, vocab: &Vocabulary) -> Self {
        TrainingSet {
            rows: corpus.docs.iter().map(|d| vocab.count_vector(d)).collect(),
            labels: corpus.labels(),
            dim: vocab.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positive_rate(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().map(|&l| l as f64).sum::<f64>() / self.labels.len() as f64
    }

    fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }

    /// Copy with the given columns zeroed in every row.
    pub fn without(&self, removed: &BTreeSet<usize>) -> TrainingSet {
        TrainingSet {
            rows: self.rows.iter().map(|r| r.without(removed)).collect(),
            labels: self.labels.clone(),
            dim: self.dim,
        }
    }
}

fn default_l2() -> f64 {
    1e-3
}
fn default_epochs() -> usize {
    300
}
fn default_lr() -> f64 {
    1.0
}
fn default_k_max() -> usize {
    10
}
fn default_max_active() -> usize {
    10
}
fn default_knn_k() -> usize {
    5
}
fn default_trees() -> usize {
    30
}

/// Kind and hyperparameters of a built-in classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// L2-regularized logistic regression by batch gradient descent.
    Logreg {
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_lr")]
        lr: f64,
    },
    /// L1 path logistic regression limited to `k_max` non-zero weights.
    SparseLogreg {
        #[serde(default = "default_k_max")]
        k_max: usize,
    },
    /// CART tree with at most `max_active_features` distinct features per path.
    DecisionTree {
        #[serde(default = "default_max_active")]
        max_active_features: usize,
        #[serde(default)]
        max_depth: Option<usize>,
    },
    Knn {
        #[serde(default = "default_knn_k")]
        k: usize,
    },
    RandomForest {
        #[serde(default = "default_trees")]
        n_trees: usize,
        #[serde(default)]
        max_depth: Option<usize>,
    },
}

impl ModelSpec {
    pub fn logreg() -> Self {
        ModelSpec::Logreg {
            l2: default_l2(),
            epochs: default_epochs(),
            lr: default_lr(),
        }
    }

    pub fn sparse_logreg() -> Self {
        ModelSpec::SparseLogreg { k_max: default_k_max() }
    }

    pub fn decision_tree() -> Self {
        ModelSpec::DecisionTree {
            max_active_features: default_max_active(),
            max_depth: None,
        }
    }

    pub fn knn() -> Self {
        ModelSpec::Knn { k: default_knn_k() }
    }

    pub fn random_forest() -> Self {
        ModelSpec::RandomForest {
            n_trees: default_trees(),
            max_depth: None,
        }
    }

    /// Default spec for a kind name as used on the command line and the API.
    pub fn from_kind(kind: &str) -> Option<Self> {
        Some(match kind {
            "logreg" | "lr" => ModelSpec::logreg(),
            "sparse_logreg" | "sparse_lr" => ModelSpec::sparse_logreg(),
            "decision_tree" | "dt" => ModelSpec::decision_tree(),
            "knn" | "nn" => ModelSpec::knn(),
            "random_forest" | "rf" => ModelSpec::random_forest(),
            _ => return None,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Logreg { .. } => "logreg",
            ModelSpec::SparseLogreg { .. } => "sparse_logreg",
            ModelSpec::DecisionTree { .. } => "decision_tree",
            ModelSpec::Knn { .. } => "knn",
            ModelSpec::RandomForest { .. } => "random_forest",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        match *self {
            ModelSpec::Logreg { l2, epochs, lr } => {
                if !(l2 >= 0.0 && l2.is_finite()) {
                    return bad("l2 must be a finite non-negative number");
                }
                if epochs == 0 {
                    return bad("epochs must be at least 1");
                }
                if !(lr > 0.0 && lr.is_finite()) {
                    return bad("lr must be positive");
                }
            }
            ModelSpec::SparseLogreg { k_max: 0 } => return bad("k_max must be at least 1"),
            ModelSpec::DecisionTree {
                max_active_features: 0, ..
            } => return bad("max_active_features must be at least 1"),
            ModelSpec::DecisionTree {
                max_depth: Some(0), ..
            }
            | ModelSpec::RandomForest {
                max_depth: Some(0), ..
            } => return bad("max_depth must be at least 1"),
            ModelSpec::Knn { k: 0 } => return bad("k must be at least 1"),
            ModelSpec::RandomForest { n_trees: 0, .. } => return bad("n_trees must be at least 1"),
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelBody {
    Linear(LinearModel),
    Tree(Tree),
    Knn(KnnModel),
    Forest(Forest),
}

/// A trained built-in classifier and everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub seed: u64,
    pub feature_dim: usize,
    pub vocabulary_hash: String,
    /// Columns zeroed before training and ignored at inference.
    pub removed: BTreeSet<usize>,
    pub body: ModelBody,
}

impl TrainedModel {
    fn masked<'a>(&self, x: &'a CountVector) -> Cow<'a, CountVector> {
        if self.removed.is_empty() {
            Cow::Borrowed(x)
        } else {
            Cow::Owned(x.without(&self.removed))
        }
    }

    /// Gold features for `x`: the features the model actually relies on for
    /// this prediction that are present in `x`.
    ///
    /// Sparse logistic regression: non-zero weights. Decision tree: split
    /// features on the decision path. Other kinds have no gold set.
    pub fn gold_features(&self, x: &CountVector) -> Option<BTreeSet<usize>> {
        let x = self.masked(x);
        let present = |j: &usize| x.get(*j) > 0.0;
        match (&self.spec, &self.body) {
            (ModelSpec::SparseLogreg { .. }, ModelBody::Linear(m)) => {
                Some(m.nonzero_features().into_iter().filter(present).collect())
            }
            (ModelSpec::DecisionTree { .. }, ModelBody::Tree(t)) => {
                Some(t.decision_path_features(&x).into_iter().filter(present).collect())
            }
            _ => None,
        }
    }

    /// Split features on the root-to-leaf path of `x`, present or not.
    pub fn decision_path_features(&self, x: &CountVector) -> Option<BTreeSet<usize>> {
        match &self.body {
            ModelBody::Tree(t) => Some(t.decision_path_features(&self.masked(x))),
            _ => None,
        }
    }

    /// Stable digest of the learned parameters.
    pub fn weights_hash(&self) -> String {
        let body = serde_json::to_vec(&self.body).expect("model body serializes");
        hex::encode(Sha256::digest(body))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(s)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn accuracy(&self, data: &TrainingSet) -> f64 {
        accuracy(self, data)
    }
}

impl ProbabilityModel for TrainedModel {
    fn predict_prob(&self, x: &CountVector) -> f64 {
        let x = self.masked(x);
        let p = match &self.body {
            ModelBody::Linear(m) => m.predict_prob(&x),
            ModelBody::Tree(t) => t.predict(&x),
            ModelBody::Knn(m) => m.predict_prob(&x),
            ModelBody::Forest(f) => f.predict(&x),
        };
        p.clamp(0.0, 1.0)
    }

    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn metadata(&self) -> ModelMetadata {
        ModelMetadata {
            kind: self.spec.kind().into(),
            hyperparameters: serde_json::to_value(&self.spec).unwrap_or_default(),
            seed: Some(self.seed),
        }
    }
}

/// Fraction of rows whose predicted class matches the label.
pub fn accuracy(model: &dyn ProbabilityModel, data: &TrainingSet) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data
        .rows
        .iter()
        .zip(&data.labels)
        .filter(|(x, &y)| predicted_class(model.predict_prob(x)) == y)
        .count();
    hits as f64 / data.len() as f64
}

/// Trains `spec` on `data`.
pub fn train(spec: &ModelSpec, data: &TrainingSet, vocab_hash: &str, seed: u64) -> Result<TrainedModel> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::DegenerateLabels);
    }
    let body = match *spec {
        ModelSpec::Logreg { l2, epochs, lr } => {
            ModelBody::Linear(logistic::train_l2(data, l2, epochs, lr)?.model)
        }
        ModelSpec::SparseLogreg { k_max } => ModelBody::Linear(logistic::train_sparse(data, k_max)?),
        ModelSpec::DecisionTree {
            max_active_features,
            max_depth,
        } => {
            let params = TreeParams {
                max_depth,
                max_active_features: Some(max_active_features),
                max_features: None,
            };
            let idx: Vec<usize> = (0..data.len()).collect();
            ModelBody::Tree(Tree::fit(data, &idx, &params, seed))
        }
        ModelSpec::Knn { k } => {
            if k > data.len() {
                return Err(Error::Config(format!(
                    "k = {k} exceeds the {} training rows",
                    data.len()
                )));
            }
            ModelBody::Knn(KnnModel::fit(data, k))
        }
        ModelSpec::RandomForest { n_trees, max_depth } => {
            ModelBody::Forest(Forest::fit(data, n_trees, max_depth, seed))
        }
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        seed,
        feature_dim: data.dim,
        vocabulary_hash: vocab_hash.to_owned(),
        removed: BTreeSet::new(),
        body,
    })
}

/// L2 logistic regression; see [`ModelSpec::Logreg`].
pub fn train_logreg_l2(data: &TrainingSet, l2: f64, epochs: usize, lr: f64, seed: u64) -> Result<TrainedModel> {
    train(&ModelSpec::Logreg { l2, epochs, lr }, data, "", seed)
}

/// Sparse logistic regression and its gold feature set (all non-zero weights).
pub fn train_sparse_logreg(data: &TrainingSet, k_max: usize, seed: u64) -> Result<(TrainedModel, BTreeSet<usize>)> {
    let model = train(&ModelSpec::SparseLogreg { k_max }, data, "", seed)?;
    let gold = match &model.body {
        ModelBody::Linear(m) => m.nonzero_features().into_iter().collect(),
        _ => unreachable!("sparse logistic regression has a linear body"),
    };
    Ok((model, gold))
}

pub fn train_decision_tree(
    data: &TrainingSet,
    max_active_features: usize,
    max_depth: Option<usize>,
    seed: u64,
) -> Result<TrainedModel> {
    train(
        &ModelSpec::DecisionTree {
            max_active_features,
            max_depth,
        },
        data,
        "",
        seed,
    )
}

pub fn train_knn(data: &TrainingSet, k: usize) -> Result<TrainedModel> {
    train(&ModelSpec::Knn { k }, data, "", 0)
}

pub fn train_random_forest(data: &TrainingSet, n_trees: usize, seed: u64) -> Result<TrainedModel> {
    train(
        &ModelSpec::RandomForest {
            n_trees,
            max_depth: None,
        },
        data,
        "",
        seed,
    )
}

/// Retrains `spec` with `removed` columns zeroed in the training data. The
/// returned model ignores those columns at inference.
pub fn retrain_without(
    spec: &ModelSpec,
    removed: &BTreeSet<usize>,
    data: &TrainingSet,
    vocab_hash: &str,
    seed: u64,
) -> Result<TrainedModel> {
    if let Some(&j) = removed.iter().find(|&&j| j >= data.dim) {
        return Err(Error::Range(format!("column {j} outside vocabulary of {}", data.dim)));
    }
    let reduced = data.without(removed);
    if removed.len() >= data.dim || reduced.rows.iter().all(CountVector::is_zero) {
        return Err(Error::DegenerateFeatures);
    }
    let mut model = train(spec, &reduced, vocab_hash, seed)?;
    model.removed = removed.clone();
    Ok(model)
}

//! Request and response documents.

use std::collections::BTreeSet;

use lime_core::lime::Explanation;
use lime_core::models::{ModelSpec, TrainedModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub n_docs: usize,
    /// Vocabulary size.
    pub n_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TrainRequest {
    pub dataset: String,
    pub kind: String,
    /// Hyperparameters of `kind`; omitted ones take their defaults.
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub model_id: String,
    pub dataset: String,
    pub weights_hash: String,
    pub metrics: Metrics,
}

/// Persisted model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub model_id: String,
    pub dataset: String,
    pub metrics: Metrics,
    pub model: TrainedModel,
}

impl ModelDocument {
    pub fn summary(&self) -> TrainResponse {
        TrainResponse {
            model_id: self.model_id.clone(),
            dataset: self.dataset.clone(),
            weights_hash: self.model.weights_hash(),
            metrics: self.metrics,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ExplainRequest {
    /// Index into the dataset's held-out split.
    #[serde(default)]
    pub instance_index: Option<usize>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PickRequest {
    pub instance_indices: Vec<usize>,
    #[serde(rename = "B", alias = "budget")]
    pub budget: usize,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickResponse {
    /// Held-out instance indices in pick order.
    pub selected: Vec<usize>,
    pub coverage_trace: Vec<f64>,
    /// Explanations of `selected`, same order.
    pub explanations: Vec<Explanation>,
}

fn default_budget() -> usize {
    10
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
pub struct SessionRequest {
    pub dataset: String,
    pub model_spec: ModelSpec,
    #[serde(rename = "B", alias = "budget", default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub index: usize,
    pub removed_words_cumulative: BTreeSet<String>,
    pub model_id: String,
    pub metrics: Metrics,
    /// Held-out instance indices of `picked`.
    pub picked_instances: Vec<usize>,
    pub picked: Vec<Explanation>,
    pub coverage_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub dataset: String,
    pub model_spec: ModelSpec,
    #[serde(rename = "B")]
    pub budget: usize,
    pub k: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub rounds: Vec<Round>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct RoundRequest {
    #[serde(default)]
    pub remove_words: Vec<String>,
}

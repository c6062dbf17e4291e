use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use lime_core::data::{self, LabeledCorpus};
use lime_core::lime::{explain_instance_excluding, Explanation, KernelConfig, LimeConfig};
use lime_core::models::{self, ModelSpec, TrainingSet};
use lime_core::pick::{build_matrix, submodular_pick};
use lime_core::seed::derive_seed;
use lime_core::textrepr::{Document, Vocabulary};
use lime_core::Error as CoreError;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::{Mutex, OwnedMutexGuard};

use crate::api::*;
use crate::error::{ApiError, ApiResult};
use crate::store::{valid_name, Store};

/// Fraction of each dataset used for training; the rest is held out.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub listen: String,
    pub default_k: usize,
    pub default_n: usize,
    pub default_sigma: f64,
    pub master_seed: u64,
    /// Held-out instances a session explains and picks from each round.
    pub session_pool: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: PathBuf::from("data"),
            listen: "127.0.0.1:8080".into(),
            default_k: 10,
            default_n: 5000,
            default_sigma: 0.25,
            master_seed: 0,
            session_pool: 100,
        }
    }
}

/// A registered corpus with its fixed split.
pub struct Dataset {
    pub corpus: LabeledCorpus,
    pub vocab: Vocabulary,
    pub vocab_hash: String,
    pub train: TrainingSet,
    pub heldout_docs: Vec<Document>,
    pub heldout: TrainingSet,
}

impl Dataset {
    pub fn prepare(corpus: LabeledCorpus) -> lime_core::Result<Self> {
        let vocab = corpus.vocabulary();
        let (train, heldout) = data::split(&corpus, TRAIN_FRACTION, corpus.split_seed)?;
        Ok(Dataset {
            vocab_hash: vocab.hash(),
            train: TrainingSet::from_corpus(&train, &vocab),
            heldout: TrainingSet::from_corpus(&heldout, &vocab),
            heldout_docs: heldout.docs,
            vocab,
            corpus,
        })
    }

    pub fn info(&self) -> DatasetInfo {
        DatasetInfo {
            name: self.corpus.name.clone(),
            n_docs: self.corpus.len(),
            n_features: self.vocab.len(),
        }
    }

    fn heldout_doc(&self, index: usize) -> ApiResult<&Document> {
        self.heldout_docs.get(index).ok_or_else(|| {
            ApiError::Unprocessable(format!(
                "instance_index {index} out of range for {} held-out documents",
                self.heldout_docs.len()
            ))
        })
    }
}

/// Committed session state plus the guard serializing its writers.
struct SessionSlot {
    writer: Arc<Mutex<()>>,
    current: RwLock<Arc<Session>>,
}

pub struct AppState {
    cfg: ServiceConfig,
    store: Store,
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
    models: RwLock<HashMap<String, Arc<ModelDocument>>>,
    sessions: RwLock<BTreeMap<String, Arc<SessionSlot>>>,
    next_session: AtomicU64,
}

struct PoolSettings {
    k: usize,
    n: usize,
    sigma: f64,
    seed: u64,
}

fn model_id(dataset: &str, spec: &ModelSpec, seed: u64, removed: &BTreeSet<usize>) -> String {
    let key = json!({ "dataset": dataset, "spec": spec, "seed": seed, "removed": removed });
    let digest = Sha256::digest(key.to_string().as_bytes());
    hex::encode(&digest[..8])
}

fn session_number(id: &str) -> Option<u64> {
    id.strip_prefix('s')?.parse().ok()
}

impl AppState {
    /// Opens the data directory and loads every stored dataset, model and session.
    pub fn open(cfg: ServiceConfig) -> ApiResult<Self> {
        let store = Store::open(&cfg.data_dir)?;
        let state = AppState {
            store,
            datasets: RwLock::default(),
            models: RwLock::default(),
            sessions: RwLock::default(),
            next_session: AtomicU64::new(1),
            cfg,
        };
        for corpus in state.store.load_datasets()? {
            state.insert_dataset(corpus)?;
        }
        for doc in state.store.load_all::<ModelDocument>("models")? {
            state.models.write().unwrap().insert(doc.model_id.clone(), Arc::new(doc));
        }
        for session in state.store.load_all::<Session>("sessions")? {
            if let Some(n) = session_number(&session.id) {
                state.next_session.fetch_max(n + 1, Ordering::SeqCst);
            }
            state.insert_session(session);
        }
        log::info!(
            "loaded {} datasets, {} models, {} sessions from {}",
            state.datasets.read().unwrap().len(),
            state.models.read().unwrap().len(),
            state.sessions.read().unwrap().len(),
            state.store.root().display()
        );
        Ok(state)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    fn insert_dataset(&self, corpus: LabeledCorpus) -> ApiResult<()> {
        let name = corpus.name.clone();
        let ds = Dataset::prepare(corpus)?;
        self.datasets.write().unwrap().insert(name, Arc::new(ds));
        Ok(())
    }

    fn insert_session(&self, session: Session) {
        let slot = SessionSlot {
            writer: Arc::new(Mutex::new(())),
            current: RwLock::new(Arc::new(session)),
        };
        let id = slot.current.read().unwrap().id.clone();
        self.sessions.write().unwrap().insert(id, Arc::new(slot));
    }

    /// Persists `corpus` and makes it available under its name, replacing any
    /// dataset of the same name.
    pub fn register_dataset(&self, corpus: LabeledCorpus) -> ApiResult<DatasetInfo> {
        if !valid_name(&corpus.name) {
            return Err(ApiError::Unprocessable(format!("invalid dataset name `{}`", corpus.name)));
        }
        let name = corpus.name.clone();
        self.store.save_dataset(&corpus)?;
        self.insert_dataset(corpus)?;
        Ok(self.dataset(&name)?.info())
    }

    pub fn list_datasets(&self) -> Vec<DatasetInfo> {
        self.datasets.read().unwrap().values().map(|d| d.info()).collect()
    }

    pub fn dataset(&self, name: &str) -> ApiResult<Arc<Dataset>> {
        self.datasets
            .read()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("dataset `{name}`")))
    }

    pub fn model(&self, id: &str) -> ApiResult<Arc<ModelDocument>> {
        self.models
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("model `{id}`")))
    }

    pub fn list_models(&self) -> Vec<TrainResponse> {
        let mut out: Vec<TrainResponse> = self.models.read().unwrap().values().map(|m| m.summary()).collect();
        out.sort_by(|a, b| a.model_id.cmp(&b.model_id));
        out
    }

    /// Trains (or reuses) the model identified by its dataset, spec, seed and removed columns.
    pub fn train_model(
        &self,
        dataset: &str,
        spec: &ModelSpec,
        seed: u64,
        removed: &BTreeSet<usize>,
    ) -> ApiResult<Arc<ModelDocument>> {
        let ds = self.dataset(dataset)?;
        let id = model_id(dataset, spec, seed, removed);
        if let Ok(existing) = self.model(&id) {
            return Ok(existing);
        }
        let model = if removed.is_empty() {
            models::train(spec, &ds.train, &ds.vocab_hash, seed)?
        } else {
            models::retrain_without(spec, removed, &ds.train, &ds.vocab_hash, seed)?
        };
        let metrics = Metrics {
            train_accuracy: model.accuracy(&ds.train),
            heldout_accuracy: model.accuracy(&ds.heldout),
        };
        let doc = ModelDocument {
            model_id: id.clone(),
            dataset: dataset.to_owned(),
            metrics,
            model,
        };
        self.store.save("models", &id, &doc)?;
        log::info!(
            "trained model {id}: {} on {dataset}, seed {seed}, {} removed, heldout accuracy {:.4}",
            spec.kind(),
            removed.len(),
            metrics.heldout_accuracy
        );
        let doc = Arc::new(doc);
        self.models.write().unwrap().entry(id).or_insert_with(|| doc.clone());
        Ok(doc)
    }

    pub fn handle_train(&self, req: TrainRequest) -> ApiResult<TrainResponse> {
        self.dataset(&req.dataset)?;
        let mut body = req.params;
        body.insert("kind".into(), Value::String(req.kind.clone()));
        let spec: ModelSpec = serde_json::from_value(Value::Object(body))
            .map_err(|e| ApiError::Unprocessable(format!("bad model spec: {e}")))?;
        spec.validate()?;
        let seed = req.seed.unwrap_or(self.cfg.master_seed);
        Ok(self.train_model(&req.dataset, &spec, seed, &BTreeSet::new())?.summary())
    }

    fn lime_config(&self, k: Option<usize>, n: Option<usize>, sigma: Option<f64>, seed: Option<u64>) -> ApiResult<LimeConfig> {
        Ok(LimeConfig {
            k: k.unwrap_or(self.cfg.default_k),
            n_samples: n.unwrap_or(self.cfg.default_n),
            kernel: KernelConfig::new(sigma.unwrap_or(self.cfg.default_sigma))?,
            seed: seed.unwrap_or(self.cfg.master_seed),
            target_class: None,
        })
    }

    pub fn handle_explain(&self, model_id: &str, req: ExplainRequest) -> ApiResult<Explanation> {
        let doc = self.model(model_id)?;
        let ds = self.dataset(&doc.dataset)?;
        let instance = match (req.instance_index, req.text) {
            (Some(i), None) => ds.heldout_doc(i)?.clone(),
            (None, Some(text)) => Document::new("text", text, None),
            _ => {
                return Err(ApiError::Unprocessable(
                    "give exactly one of instance_index and text".into(),
                ))
            }
        };
        let cfg = self.lime_config(req.k, req.n, req.sigma, req.seed)?;
        Ok(explain_instance_excluding(&doc.model, &instance, &ds.vocab, &cfg, &doc.model.removed)?)
    }

    /// Explains held-out instances, each with its own seed substream.
    ///
    /// With `skip_degenerate`, instances left with no explainable word are dropped.
    fn explain_pool(
        &self,
        doc: &ModelDocument,
        ds: &Dataset,
        indices: &[usize],
        settings: &PoolSettings,
        skip_degenerate: bool,
    ) -> ApiResult<(Vec<usize>, Vec<Explanation>)> {
        let mut kept = Vec::with_capacity(indices.len());
        let mut exps = Vec::with_capacity(indices.len());
        for &i in indices {
            let instance = ds.heldout_doc(i)?;
            let cfg = self.lime_config(
                Some(settings.k),
                Some(settings.n),
                Some(settings.sigma),
                Some(derive_seed(settings.seed, i as u64)),
            )?;
            match explain_instance_excluding(&doc.model, instance, &ds.vocab, &cfg, &doc.model.removed) {
                Ok(e) => {
                    kept.push(i);
                    exps.push(e);
                }
                Err(CoreError::DegenerateInstance) if skip_degenerate => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok((kept, exps))
    }

    fn pick_from(
        &self,
        doc: &ModelDocument,
        ds: &Dataset,
        indices: &[usize],
        budget: usize,
        settings: &PoolSettings,
        skip_degenerate: bool,
    ) -> ApiResult<PickResponse> {
        let (kept, exps) = self.explain_pool(doc, ds, indices, settings, skip_degenerate)?;
        if kept.is_empty() {
            return Err(ApiError::Unprocessable("no explainable instances to pick from".into()));
        }
        let w = build_matrix(&exps, ds.vocab.len())?;
        let result = submodular_pick(&w, budget)?;
        Ok(PickResponse {
            selected: result.selected.iter().map(|&r| kept[r]).collect(),
            explanations: result.selected.iter().map(|&r| exps[r].clone()).collect(),
            coverage_trace: result.coverage_trace,
        })
    }

    pub fn handle_pick(&self, model_id: &str, req: PickRequest) -> ApiResult<PickResponse> {
        let doc = self.model(model_id)?;
        let ds = self.dataset(&doc.dataset)?;
        if req.instance_indices.is_empty() {
            return Err(ApiError::Unprocessable("instance_indices is empty".into()));
        }
        if req.budget == 0 {
            return Err(ApiError::Unprocessable("B must be at least 1".into()));
        }
        let settings = PoolSettings {
            k: req.k.unwrap_or(self.cfg.default_k),
            n: req.n.unwrap_or(self.cfg.default_n),
            sigma: self.cfg.default_sigma,
            seed: req.seed.unwrap_or(self.cfg.master_seed),
        };
        self.pick_from(&doc, &ds, &req.instance_indices, req.budget, &settings, false)
    }

    fn make_round(&self, session: &Session, removed_words: BTreeSet<String>) -> ApiResult<Round> {
        let ds = self.dataset(&session.dataset)?;
        let removed: BTreeSet<usize> = removed_words
            .iter()
            .map(|w| ds.vocab.index(w).expect("removed words are validated against the vocabulary"))
            .collect();
        let doc = self.train_model(&session.dataset, &session.model_spec, session.seed, &removed)?;
        let pool: Vec<usize> = (0..ds.heldout_docs.len().min(self.cfg.session_pool)).collect();
        let settings = PoolSettings {
            k: session.k,
            n: session.n_samples,
            sigma: self.cfg.default_sigma,
            seed: session.seed,
        };
        let pick = self.pick_from(&doc, &ds, &pool, session.budget, &settings, true)?;
        Ok(Round {
            index: session.rounds.len(),
            removed_words_cumulative: removed_words,
            model_id: doc.model_id.clone(),
            metrics: doc.metrics,
            picked_instances: pick.selected,
            picked: pick.explanations,
            coverage_trace: pick.coverage_trace,
        })
    }

    /// Creates a session with its round 0 already computed.
    pub fn create_session(&self, req: SessionRequest) -> ApiResult<Session> {
        self.dataset(&req.dataset)?;
        req.model_spec.validate()?;
        if req.budget == 0 || req.k == 0 {
            return Err(ApiError::Unprocessable("B and k must be at least 1".into()));
        }
        let number = self.next_session.fetch_add(1, Ordering::SeqCst);
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut session = Session {
            id: format!("s{number:06}"),
            dataset: req.dataset,
            model_spec: req.model_spec,
            budget: req.budget,
            k: req.k,
            n_samples: req.n.unwrap_or(self.cfg.default_n),
            seed: req.seed.unwrap_or_else(|| derive_seed(self.cfg.master_seed, number)),
            created_at,
            rounds: Vec::new(),
        };
        let round = self.make_round(&session, BTreeSet::new())?;
        session.rounds.push(round);
        self.store.save("sessions", &session.id, &session)?;
        log::info!("created session {} on {}, seed {}", session.id, session.dataset, session.seed);
        self.insert_session(session.clone());
        Ok(session)
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<SessionSlot>> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("session `{id}`")))
    }

    pub fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        Ok(self.slot(id)?.current.read().unwrap().clone())
    }

    /// Claims the session's write guard, or fails with 409 if a round is in flight.
    pub fn begin_round(&self, id: &str) -> ApiResult<OwnedMutexGuard<()>> {
        self.slot(id)?
            .writer
            .clone()
            .try_lock_owned()
            .map_err(|_| ApiError::Conflict(format!("a retrain for session `{id}` is already in flight")))
    }

    /// Appends a round; the caller must hold the guard from [`AppState::begin_round`].
    pub fn add_round(&self, id: &str, req: RoundRequest, _guard: &OwnedMutexGuard<()>) -> ApiResult<Round> {
        let slot = self.slot(id)?;
        let mut session = Session::clone(&slot.current.read().unwrap());
        let ds = self.dataset(&session.dataset)?;
        if let Some(w) = req.remove_words.iter().find(|w| ds.vocab.index(w).is_none()) {
            return Err(ApiError::Unprocessable(format!("unknown word `{w}`")));
        }
        let mut removed = session
            .rounds
            .last()
            .map(|r| r.removed_words_cumulative.clone())
            .unwrap_or_default();
        removed.extend(req.remove_words);
        let round = self.make_round(&session, removed)?;
        session.rounds.push(round.clone());
        self.store.save("sessions", &session.id, &session)?;
        log::info!(
            "session {id} round {}: {} words removed, heldout accuracy {:.4}",
            round.index,
            round.removed_words_cumulative.len(),
            round.metrics.heldout_accuracy
        );
        *slot.current.write().unwrap() = Arc::new(session);
        Ok(round)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_ids_depend_on_every_input() {
        let spec = ModelSpec::logreg();
        let base = model_id("a", &spec, 1, &BTreeSet::new());
        assert_eq!(base, model_id("a", &spec, 1, &BTreeSet::new()));
        assert_eq!(base.len(), 16);
        assert_ne!(base, model_id("b", &spec, 1, &BTreeSet::new()));
        assert_ne!(base, model_id("a", &spec, 2, &BTreeSet::new()));
        assert_ne!(base, model_id("a", &ModelSpec::knn(), 1, &BTreeSet::new()));
        assert_ne!(base, model_id("a", &spec, 1, &BTreeSet::from([3])));
    }

    #[test]
    fn session_numbers() {
        assert_eq!(session_number("s000012"), Some(12));
        assert_eq!(session_number("x1"), None);
    }
}

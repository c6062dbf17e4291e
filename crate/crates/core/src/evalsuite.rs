//! Simulated-user experiments.
//!
//! * faithfulness: do explanations of transparent models recover the words
//!   those models actually use?
//! * trust: can a user, looking only at an explanation, tell which predictions
//!   would change if some words were untrustworthy?
//! * model selection: can a user pick the better of two classifiers with equal
//!   validation accuracy by inspecting a budget of explanations?
//!
//! Every experiment is a pure function of its configuration and seed.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{self, LabeledCorpus, NoisyFeatureSpec, UntrustworthySet};
use crate::error::{Error, Result};
use crate::lime::{self, Explanation, LimeConfig};
use crate::models::{self, predicted_class, ModelSpec, ProbabilityModel, TrainedModel, TrainingSet};
use crate::pick::{self, ExplanationMatrix};
use crate::seed::derive_seed;
use crate::textrepr::{Document, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerKind {
    Lime,
    Greedy,
    Random,
}

impl ExplainerKind {
    pub const ALL: [ExplainerKind; 3] = [ExplainerKind::Lime, ExplainerKind::Greedy, ExplainerKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            ExplainerKind::Lime => "lime",
            ExplainerKind::Greedy => "greedy",
            ExplainerKind::Random => "random",
        }
    }
}

/// What a simulated user gets to see for one prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    Lime(Explanation),
    /// A bare word list from the greedy or random baseline.
    Features(Vec<usize>),
}

impl Evidence {
    pub fn columns(&self) -> BTreeSet<usize> {
        match self {
            Evidence::Lime(e) => e.columns(),
            Evidence::Features(f) => f.iter().copied().collect(),
        }
    }
}

/// Explains `doc` with the chosen method. `seed` drives sampling.
pub fn explain_with(
    kind: ExplainerKind,
    f: &dyn ProbabilityModel,
    doc: &Document,
    vocab: &Vocabulary,
    cfg: &LimeConfig,
) -> Result<Evidence> {
    Ok(match kind {
        ExplainerKind::Lime => Evidence::Lime(lime::explain_instance(f, doc, vocab, cfg)?),
        ExplainerKind::Greedy => Evidence::Features(lime::greedy_explain(f, doc, vocab, cfg.k)),
        ExplainerKind::Random => Evidence::Features(lime::random_explain(doc, vocab, cfg.k, cfg.seed)),
    })
}

/// Mean and standard error of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    /// Pick budget for model-selection metrics.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; 0 for a single value.
    pub stderr: f64,
}

impl MetricSummary {
    pub fn from_values(name: impl Into<String>, budget: Option<usize>, values: &[f64]) -> Self {
        let n = values.len();
        let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
        let stderr = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        MetricSummary {
            name: name.into(),
            budget,
            n,
            mean,
            stderr,
        }
    }
}

/// One observation: a metric's value in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    pub run: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub config: serde_json::Value,
    pub seed: u64,
    /// Seeds of the individual runs, in run order.
    pub run_seeds: Vec<u64>,
    pub summary: Vec<MetricSummary>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    fn new(kind: &str, config: &impl Serialize, seed: u64) -> Self {
        ExperimentReport {
            kind: kind.into(),
            config: serde_json::to_value(config).unwrap_or_default(),
            seed,
            run_seeds: Vec::new(),
            summary: Vec::new(),
            runs: Vec::new(),
        }
    }

    fn record(&mut self, metric: &str, budget: Option<usize>, run: usize, value: f64) {
        self.runs.push(RunRecord {
            metric: metric.into(),
            budget,
            run,
            value,
        });
    }

    /// Recomputes `summary` from `runs`, keeping first-seen metric order.
    fn summarize(&mut self) {
        let mut keys: Vec<(String, Option<usize>)> = Vec::new();
        for r in &self.runs {
            let key = (r.metric.clone(), r.budget);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        self.summary = keys
            .into_iter()
            .map(|(name, budget)| {
                let values: Vec<f64> = self
                    .runs
                    .iter()
                    .filter(|r| r.metric == name && r.budget == budget)
                    .map(|r| r.value)
                    .collect();
                MetricSummary::from_values(name, budget, &values)
            })
            .collect();
    }

    pub fn metric(&self, name: &str, budget: Option<usize>) -> Option<&MetricSummary> {
        self.summary.iter().find(|m| m.name == name && m.budget == budget)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-run rows: `metric,budget,run,value`.
    pub fn write_runs_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "budget", "run", "value"]).map_err(csv_error)?;
        for r in &self.runs {
            let budget = r.budget.map(|b| b.to_string()).unwrap_or_default();
            w.write_record([r.metric.clone(), budget, r.run.to_string(), r.value.to_string()])
                .map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Aggregates: `metric,budget,n,mean,stderr`.
    pub fn write_summary_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "budget", "n", "mean", "stderr"]).map_err(csv_error)?;
        for m in &self.summary {
            let budget = m.budget.map(|b| b.to_string()).unwrap_or_default();
            w.write_record([
                m.name.clone(),
                budget,
                m.n.to_string(),
                m.mean.to_string(),
                m.stderr.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv output failed: {e}"))
}

/// Train/test split plus the shared vocabulary and count matrices.
struct Prepared {
    vocab: Vocabulary,
    train: TrainingSet,
    test_docs: Vec<Document>,
}

fn prepare(corpus: &LabeledCorpus, train_frac: f64, seed: u64, max_test: Option<usize>) -> Result<Prepared> {
    let vocab = corpus.vocabulary();
    let (train, test) = data::split(corpus, train_frac, seed)?;
    let mut test_docs = test.docs;
    if let Some(m) = max_test {
        test_docs.truncate(m);
    }
    Ok(Prepared {
        train: TrainingSet::from_corpus(&train, &vocab),
        vocab,
        test_docs,
    })
}

// ---------------------------------------------------------------------------
// Faithfulness

/// Transparent models with known gold features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldModelKind {
    SparseLogreg,
    DecisionTree,
}

impl GoldModelKind {
    pub const ALL: [GoldModelKind; 2] = [GoldModelKind::SparseLogreg, GoldModelKind::DecisionTree];

    pub fn spec(self) -> ModelSpec {
        match self {
            GoldModelKind::SparseLogreg => ModelSpec::sparse_logreg(),
            GoldModelKind::DecisionTree => ModelSpec::decision_tree(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessConfig {
    pub k: usize,
    pub n_samples: usize,
    pub sigma: f64,
    pub train_frac: f64,
    /// Explain at most this many test documents.
    pub max_test: Option<usize>,
    pub seed: u64,
}

impl Default for FaithfulnessConfig {
    fn default() -> Self {
        FaithfulnessConfig {
            k: 10,
            n_samples: 5000,
            sigma: 0.25,
            train_frac: 0.8,
            max_test: None,
            seed: 0,
        }
    }
}

impl FaithfulnessConfig {
    fn lime(&self, seed: u64) -> LimeConfig {
        LimeConfig {
            k: self.k,
            n_samples: self.n_samples,
            kernel: lime::KernelConfig {
                sigma: self.sigma,
                ..Default::default()
            },
            seed,
            target_class: None,
        }
    }
}

/// Recall of each test document with a non-empty gold set, in document order.
fn recall_scores(
    model: &TrainedModel,
    prepared: &Prepared,
    explainer: ExplainerKind,
    cfg: &FaithfulnessConfig,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, doc) in prepared.test_docs.iter().enumerate() {
        let x = prepared.vocab.count_vector(doc);
        let gold = model.gold_features(&x).unwrap_or_default();
        if gold.is_empty() {
            continue;
        }
        let lime_cfg = cfg.lime(derive_seed(cfg.seed, 1000 + i as u64));
        let found = explain_with(explainer, model, doc, &prepared.vocab, &lime_cfg)?.columns();
        out.push(gold.intersection(&found).count() as f64 / gold.len() as f64);
    }
    Ok(out)
}

fn train_gold_model(kind: GoldModelKind, prepared: &Prepared, seed: u64) -> Result<TrainedModel> {
    models::train(&kind.spec(), &prepared.train, &prepared.vocab.hash(), derive_seed(seed, 1))
}

/// Mean gold-feature recall of one explainer on one transparent model.
pub fn faithfulness_recall(
    kind: GoldModelKind,
    explainer: ExplainerKind,
    corpus: &LabeledCorpus,
    cfg: &FaithfulnessConfig,
) -> Result<f64> {
    let prepared = prepare(corpus, cfg.train_frac, derive_seed(cfg.seed, 0), cfg.max_test)?;
    let model = train_gold_model(kind, &prepared, cfg.seed)?;
    let scores = recall_scores(&model, &prepared, explainer, cfg)?;
    Ok(MetricSummary::from_values("", None, &scores).mean)
}

/// Recall of every explainer on every transparent model.
///
/// Metrics are named `{model}/{explainer}`; each test document is one run.
pub fn faithfulness_experiment(corpus: &LabeledCorpus, cfg: &FaithfulnessConfig) -> Result<ExperimentReport> {
    let prepared = prepare(corpus, cfg.train_frac, derive_seed(cfg.seed, 0), cfg.max_test)?;
    let mut report = ExperimentReport::new("faithfulness", cfg, cfg.seed);
    for kind in GoldModelKind::ALL {
        let model = train_gold_model(kind, &prepared, cfg.seed)?;
        let model_name = kind.spec().kind();
        for explainer in ExplainerKind::ALL {
            let name = format!("{model_name}/{}", explainer.name());
            for (run, r) in recall_scores(&model, &prepared, explainer, cfg)?.into_iter().enumerate() {
                report.record(&name, None, run, r);
            }
        }
    }
    report.run_seeds = (0..prepared.test_docs.len())
        .map(|i| derive_seed(cfg.seed, 1000 + i as u64))
        .collect();
    report.summarize();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Trust

/// `true` when zeroing the untrustworthy words leaves the predicted class unchanged.
pub fn trust_oracle(f: &dyn ProbabilityModel, doc: &Document, vocab: &Vocabulary, untrustworthy: &UntrustworthySet) -> bool {
    let x = vocab.count_vector(doc);
    let cleaned = x.without(&untrustworthy.feature_ids);
    cleaned == x || predicted_class(f.predict_prob(&x)) == predicted_class(f.predict_prob(&cleaned))
}

/// Whether a simulated user trusts a prediction after seeing `evidence`.
///
/// With a LIME explanation the user zeroes the untrustworthy words it shows
/// and trusts the prediction if the surrogate stays on the same side of 0.5.
/// A bare word list is mistrusted as soon as it shows any untrustworthy word.
pub fn simulated_user(evidence: &Evidence, untrustworthy: &UntrustworthySet) -> bool {
    match evidence {
        Evidence::Lime(e) => {
            let shown: BTreeSet<usize> = e
                .columns()
                .into_iter()
                .filter(|&j| untrustworthy.contains(j))
                .collect();
            (e.surrogate_value(&BTreeSet::new()) >= 0.5) == (e.surrogate_value(&shown) >= 0.5)
        }
        Evidence::Features(f) => !f.iter().any(|&j| untrustworthy.contains(j)),
    }
}

/// F1 with "trustworthy" as the positive class.
///
/// 1 when neither side has a positive, 0 when only one does.
pub fn f1_trustworthy(oracle: &[bool], simulated: &[bool]) -> f64 {
    assert_eq!(oracle.len(), simulated.len());
    let tp = oracle.iter().zip(simulated).filter(|(o, s)| **o && **s).count() as f64;
    let pos_o = oracle.iter().filter(|o| **o).count() as f64;
    let pos_s = simulated.iter().filter(|s| **s).count() as f64;
    if pos_o + pos_s == 0.0 {
        1.0
    } else {
        2.0 * tp / (pos_o + pos_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustConfig {
    pub classifiers: Vec<ModelSpec>,
    pub runs: usize,
    pub untrustworthy_fraction: f64,
    pub k: usize,
    pub n_samples: usize,
    pub sigma: f64,
    pub train_frac: f64,
    pub max_test: Option<usize>,
    pub seed: u64,
}

impl Default for TrustConfig {
    fn default() -> Self {
        TrustConfig {
            classifiers: vec![
                ModelSpec::logreg(),
                ModelSpec::sparse_logreg(),
                ModelSpec::decision_tree(),
                ModelSpec::knn(),
                ModelSpec::random_forest(),
            ],
            runs: 25,
            untrustworthy_fraction: 0.25,
            k: 10,
            n_samples: 5000,
            sigma: 0.25,
            train_frac: 0.8,
            max_test: None,
            seed: 0,
        }
    }
}

/// Trust F1 per classifier and explainer, averaged over runs.
///
/// Explanations do not depend on the untrustworthy set, so each test document
/// is explained once per classifier and reused in every run. Metrics are
/// named `{classifier}/{explainer}`.
pub fn trust_f1_experiment(corpus: &LabeledCorpus, cfg: &TrustConfig) -> Result<ExperimentReport> {
    if cfg.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let prepared = prepare(corpus, cfg.train_frac, derive_seed(cfg.seed, 0), cfg.max_test)?;
    let mut report = ExperimentReport::new("trust", cfg, cfg.seed);
    report.run_seeds = (0..cfg.runs).map(|r| derive_seed(cfg.seed, 2000 + r as u64)).collect();
    let untrustworthy: Vec<UntrustworthySet> = report
        .run_seeds
        .iter()
        .map(|&s| data::pick_untrustworthy(prepared.vocab.len(), cfg.untrustworthy_fraction, s))
        .collect::<Result<_>>()?;

    for (c, spec) in cfg.classifiers.iter().enumerate() {
        let model = models::train(spec, &prepared.train, &prepared.vocab.hash(), derive_seed(cfg.seed, 100 + c as u64))?;
        let mut evidence: Vec<Vec<Evidence>> = Vec::new();
        for explainer in ExplainerKind::ALL {
            let mut per_doc = Vec::with_capacity(prepared.test_docs.len());
            for (i, doc) in prepared.test_docs.iter().enumerate() {
                let lime_cfg = LimeConfig {
                    k: cfg.k,
                    n_samples: cfg.n_samples,
                    kernel: lime::KernelConfig {
                        sigma: cfg.sigma,
                        ..Default::default()
                    },
                    seed: derive_seed(cfg.seed, 1000 + i as u64),
                    target_class: None,
                };
                per_doc.push(explain_with(explainer, &model, doc, &prepared.vocab, &lime_cfg)?);
            }
            evidence.push(per_doc);
        }
        for (run, u) in untrustworthy.iter().enumerate() {
            let oracle: Vec<bool> = prepared
                .test_docs
                .iter()
                .map(|d| trust_oracle(&model, d, &prepared.vocab, u))
                .collect();
            for (e, explainer) in ExplainerKind::ALL.iter().enumerate() {
                let simulated: Vec<bool> = evidence[e].iter().map(|ev| simulated_user(ev, u)).collect();
                let name = format!("{}/{}", spec.kind(), explainer.name());
                report.record(&name, None, run, f1_trustworthy(&oracle, &simulated));
            }
        }
    }
    report.summarize();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Model selection

/// Acceptance thresholds for a pair of classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSearchConfig {
    /// Largest allowed validation-accuracy gap.
    pub val_gap: f64,
    /// Smallest required test-accuracy gap.
    pub test_gap: f64,
    pub max_attempts: usize,
    pub n_trees: usize,
    /// Share of the vocabulary each candidate forest may use, drawn afresh per
    /// forest. 1 trains every forest on all columns.
    pub feature_fraction: f64,
}

impl PairSearchConfig {
    /// Relaxed thresholds that keep small corpora tractable.
    ///
    /// Each forest sees a random half of the vocabulary. On synthetic corpora,
    /// forests that differ only in their seed lean on the artificial words
    /// almost equally, so their test gaps are noise; restricting the columns
    /// makes the competitors differ in how much they rely on those words.
    pub fn desk() -> Self {
        PairSearchConfig {
            val_gap: 0.01,
            test_gap: 0.03,
            max_attempts: 200,
            n_trees: 30,
            feature_fraction: 0.5,
        }
    }

    /// 0.1% validation gap, 5% test gap, all columns for every forest.
    pub fn strict() -> Self {
        PairSearchConfig {
            val_gap: 0.001,
            test_gap: 0.05,
            max_attempts: 200,
            n_trees: 30,
            feature_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PickMethod {
    /// Greedy coverage pick.
    Submodular,
    /// Uniform random instances.
    Random,
}

impl PickMethod {
    pub fn prefix(self) -> &'static str {
        match self {
            PickMethod::Submodular => "sp",
            PickMethod::Random => "rp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelectionConfig {
    pub n_pairs: usize,
    pub budgets: Vec<usize>,
    pub methods: Vec<PickMethod>,
    pub explainer: ExplainerKind,
    pub pair_search: PairSearchConfig,
    pub noise: NoisyFeatureSpec,
    pub k: usize,
    pub n_samples: usize,
    pub sigma: f64,
    /// Share of the corpus used for train plus validation; the rest is test.
    pub train_frac: f64,
    /// Share of train plus validation held out for validation.
    pub val_frac: f64,
    /// Explain at most this many validation documents per classifier.
    pub max_val: Option<usize>,
    pub seed: u64,
}

impl Default for ModelSelectionConfig {
    fn default() -> Self {
        ModelSelectionConfig {
            n_pairs: 100,
            budgets: vec![5, 10, 15, 20, 25, 30],
            methods: vec![PickMethod::Submodular, PickMethod::Random],
            explainer: ExplainerKind::Lime,
            pair_search: PairSearchConfig::desk(),
            noise: NoisyFeatureSpec::default(),
            k: 10,
            n_samples: 1000,
            sigma: 0.25,
            train_frac: 0.8,
            val_frac: 0.2,
            max_val: None,
            seed: 0,
        }
    }
}

/// Two forests with near-equal validation and clearly different test accuracy.
pub struct ClassifierPair {
    pub models: [TrainedModel; 2],
    pub val_acc: [f64; 2],
    pub test_acc: [f64; 2],
    pub attempts: usize,
}

/// Trains forests with successive seeds until some two of them qualify.
///
/// Each new forest is compared with every earlier one, oldest first.
pub fn find_pair(
    train: &TrainingSet,
    val: &TrainingSet,
    test: &TrainingSet,
    vocab_hash: &str,
    cfg: &PairSearchConfig,
    seed: u64,
) -> Result<ClassifierPair> {
    let spec = ModelSpec::RandomForest {
        n_trees: cfg.n_trees,
        max_depth: None,
    };
    if !(cfg.feature_fraction > 0.0 && cfg.feature_fraction <= 1.0) {
        return Err(Error::Range(format!("feature fraction {} not in (0, 1]", cfg.feature_fraction)));
    }
    let keep = ((train.dim as f64 * cfg.feature_fraction).round() as usize).clamp(1, train.dim.max(1));
    let mut pool: Vec<(TrainedModel, f64, f64)> = Vec::new();
    for attempt in 0..cfg.max_attempts {
        let attempt_seed = derive_seed(seed, attempt as u64);
        let model = if keep >= train.dim {
            models::train(&spec, train, vocab_hash, attempt_seed)?
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(attempt_seed, 0));
            let kept: BTreeSet<usize> = index::sample(&mut rng, train.dim, keep).into_iter().collect();
            let removed: BTreeSet<usize> = (0..train.dim).filter(|j| !kept.contains(j)).collect();
            models::retrain_without(&spec, &removed, train, vocab_hash, attempt_seed)?
        };
        let (va, ta) = (model.accuracy(val), model.accuracy(test));
        let partner = pool
            .iter()
            .position(|(_, v, t)| (v - va).abs() <= cfg.val_gap + 1e-12 && (t - ta).abs() >= cfg.test_gap - 1e-12);
        if let Some(p) = partner {
            let (other, v, t) = pool.swap_remove(p);
            return Ok(ClassifierPair {
                models: [other, model],
                val_acc: [v, va],
                test_acc: [t, ta],
                attempts: attempt + 1,
            });
        }
        pool.push((model, va, ta));
    }
    Err(Error::PairSearchTimeout {
        attempts: cfg.max_attempts,
    })
}

/// Explanation matrix rows for one explainer's evidence.
fn evidence_matrix(evidence: &[Evidence], ids: Vec<String>, dim: usize) -> Result<ExplanationMatrix> {
    let explanations: Vec<Explanation> = evidence
        .iter()
        .zip(ids)
        .map(|(ev, id)| match ev {
            Evidence::Lime(e) => e.clone(),
            // baseline word lists carry no weights: every listed word counts 1
            Evidence::Features(f) => Explanation {
                instance_id: id,
                target_class: 0,
                intercept: 0.0,
                fidelity: f64::NAN,
                features: f
                    .iter()
                    .map(|&column| lime::ExplanationFeature {
                        token: String::new(),
                        column,
                        weight: 1.0,
                    })
                    .collect(),
                config: lime::ExplanationConfig {
                    k: f.len(),
                    n: 0,
                    sigma: 0.0,
                    seed: 0,
                    distance: Default::default(),
                },
            },
        })
        .collect();
    pick::build_matrix(&explanations, dim)
}

/// Validation predictions of `model` that flip when `marked` words are removed.
pub fn untrustworthy_count(model: &dyn ProbabilityModel, val: &TrainingSet, marked: &BTreeSet<usize>) -> usize {
    if marked.is_empty() {
        return 0;
    }
    val.rows
        .iter()
        .filter(|x| {
            let cleaned = x.without(marked);
            cleaned != **x && predicted_class(model.predict_prob(x)) != predicted_class(model.predict_prob(&cleaned))
        })
        .count()
}

/// Accuracy of choosing the better-on-test classifier, per pick method and budget.
///
/// For each pair the user sees `B` validation explanations per classifier,
/// marks every artificial word shown, and prefers the classifier with fewer
/// validation predictions that depend on marked words. A tie scores 0.5.
/// Metrics are named `{sp|rp}-{explainer}` with the budget attached.
pub fn model_selection_experiment(corpus: &LabeledCorpus, cfg: &ModelSelectionConfig) -> Result<ExperimentReport> {
    if cfg.budgets.contains(&0) {
        return Err(Error::Config("budgets must be at least 1".into()));
    }
    if cfg.explainer == ExplainerKind::Random {
        return Err(Error::Config("model selection needs the lime or greedy explainer".into()));
    }
    let mut report = ExperimentReport::new("model_selection", cfg, cfg.seed);
    for p in 0..cfg.n_pairs {
        let pair_seed = derive_seed(cfg.seed, p as u64);
        report.run_seeds.push(pair_seed);
        let outcome = run_pair(corpus, cfg, pair_seed)?;
        for (method, budget, credit) in outcome {
            let name = format!("{}-{}", method.prefix(), cfg.explainer.name());
            report.record(&name, Some(budget), p, credit);
        }
        log::info!("model selection: pair {}/{} done", p + 1, cfg.n_pairs);
    }
    report.summarize();
    Ok(report)
}

fn run_pair(corpus: &LabeledCorpus, cfg: &ModelSelectionConfig, seed: u64) -> Result<Vec<(PickMethod, usize, f64)>> {
    let (trainval, test) = data::split(corpus, cfg.train_frac, derive_seed(seed, 0))?;
    let (train, val) = data::split(&trainval, 1.0 - cfg.val_frac, derive_seed(seed, 1))?;
    let (train, mut val, test) = data::inject_noisy_features(&train, &val, &test, &cfg.noise, derive_seed(seed, 2))?;
    if let Some(m) = cfg.max_val {
        val.docs.truncate(m);
    }
    let mut all = train.docs.clone();
    all.extend(val.docs.iter().cloned());
    all.extend(test.docs.iter().cloned());
    let vocab = Vocabulary::build(&all);
    let artificial: BTreeSet<usize> = cfg.noise.feature_tokens.iter().filter_map(|t| vocab.index(t)).collect();
    let (train_set, val_set, test_set) = (
        TrainingSet::from_corpus(&train, &vocab),
        TrainingSet::from_corpus(&val, &vocab),
        TrainingSet::from_corpus(&test, &vocab),
    );
    let pair = find_pair(&train_set, &val_set, &test_set, &vocab.hash(), &cfg.pair_search, derive_seed(seed, 3))?;

    let mut marked_sets: Vec<Vec<(PickMethod, usize, BTreeSet<usize>)>> = Vec::new();
    for (m, model) in pair.models.iter().enumerate() {
        let mut evidence = Vec::with_capacity(val.len());
        for (i, doc) in val.docs.iter().enumerate() {
            let lime_cfg = LimeConfig {
                k: cfg.k,
                n_samples: cfg.n_samples,
                kernel: lime::KernelConfig {
                    sigma: cfg.sigma,
                    ..Default::default()
                },
                seed: derive_seed(seed, 10_000 + i as u64),
                target_class: None,
            };
            evidence.push(explain_with(cfg.explainer, model, doc, &vocab, &lime_cfg)?);
        }
        let ids = val.docs.iter().map(|d| d.id.clone()).collect();
        let w = evidence_matrix(&evidence, ids, vocab.len())?;
        let mut sets = Vec::new();
        for &method in &cfg.methods {
            for &budget in &cfg.budgets {
                let shown: Vec<usize> = match method {
                    PickMethod::Submodular => pick::submodular_pick(&w, budget)?.selected,
                    PickMethod::Random => {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 20_000 + 100 * m as u64 + budget as u64));
                        index::sample(&mut rng, evidence.len(), budget.min(evidence.len())).into_vec()
                    }
                };
                let marked: BTreeSet<usize> = shown
                    .iter()
                    .flat_map(|&i| evidence[i].columns())
                    .filter(|j| artificial.contains(j))
                    .collect();
                sets.push((method, budget, marked));
            }
        }
        marked_sets.push(sets);
    }

    let better = if pair.test_acc[0] > pair.test_acc[1] { 0 } else { 1 };
    let mut out = Vec::new();
    for (a, b) in marked_sets[0].iter().zip(&marked_sets[1]) {
        let counts = [
            untrustworthy_count(&pair.models[0], &val_set, &a.2),
            untrustworthy_count(&pair.models[1], &val_set, &b.2),
        ];
        let credit = match counts[0].cmp(&counts[1]) {
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Less => (better == 0) as u8 as f64,
            std::cmp::Ordering::Greater => (better == 1) as u8 as f64,
        };
        out.push((a.0, a.1, credit));
    }
    Ok(out)
}

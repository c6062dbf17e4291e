//! The `lime` command.
//!
//! [`run`] parses arguments, executes one subcommand and returns the process
//! exit code: 0 on success, 2 on a usage error, 1 on a runtime error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use lime_core::data::{self, LabeledCorpus, SynthConfig};
use lime_core::evalsuite::{
    self, ExperimentReport, FaithfulnessConfig, ModelSelectionConfig, PairSearchConfig, TrustConfig,
};
use lime_core::lime::{explain_instance_excluding, Explanation, KernelConfig, LimeConfig};
use lime_core::models::{self, ModelSpec, TrainedModel, TrainingSet};
use lime_core::pick::{build_matrix, submodular_pick};
use lime_core::seed::derive_seed;
use lime_core::textrepr::{Document, Vocabulary};
use serde::Serialize;
use thiserror::Error;

/// Fraction of a dataset used for training by `train`, `explain` and `pick`.
pub const TRAIN_FRACTION: f64 = 0.8;

const MODEL_KINDS: [&str; 10] = [
    "logreg",
    "lr",
    "sparse_logreg",
    "sparse_lr",
    "decision_tree",
    "dt",
    "knn",
    "nn",
    "random_forest",
    "rf",
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] lime_core::Error),

    #[error(transparent)]
    Service(#[from] lime_service::ApiError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "lime", version, about = "Local surrogate explanations for bag-of-words classifiers")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Explanation settings shared by several subcommands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct LimeArgs {
    /// Words per explanation.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Perturbation samples per explanation; 5000 is a good fast preset.
    #[arg(long, default_value_t = 15000)]
    pub n_samples: usize,
    /// Kernel width on cosine distance.
    #[arg(long, default_value_t = 0.25)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    /// JSONL file of {"text", "label"} lines (optional "id"), or `synth:<strong|moderate|none>:<n_docs>[:<seed>]`.
    #[arg(long)]
    pub dataset: String,
    /// Seed of the stratified 80/20 train/held-out split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Write a synthetic corpus as JSONL.
    SynthData {
        #[arg(long, default_value = "strong", value_parser = ["strong", "moderate", "none"])]
        signal: String,
        #[arg(long, default_value_t = 1000)]
        n_docs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a built-in classifier on the training split and save it as JSON.
    Train {
        #[command(flatten)]
        data: SplitArgs,
        #[arg(long, default_value = "logreg", value_parser = MODEL_KINDS)]
        kind: String,
        /// Hyperparameters as a JSON object, e.g. '{"l2": 0.01}'.
        #[arg(long)]
        params: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Explain one held-out document or a piece of text.
    Explain {
        #[command(flatten)]
        data: SplitArgs,
        /// Model JSON written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Index into the held-out split.
        #[arg(long, conflicts_with = "text", required_unless_present = "text")]
        instance: Option<usize>,
        #[arg(long)]
        text: Option<String>,
        #[command(flatten)]
        lime: LimeArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Explanation JSON; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explain held-out documents and pick a covering subset of them.
    Pick {
        #[command(flatten)]
        data: SplitArgs,
        #[arg(long)]
        model: PathBuf,
        /// Number of explanations to pick.
        #[arg(long, default_value_t = 10)]
        budget: usize,
        /// Explain only the first this many held-out documents.
        #[arg(long)]
        instances: Option<usize>,
        #[command(flatten)]
        lime: LimeArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gold-feature recall of each explainer on transparent models.
    EvalFaithfulness {
        #[arg(long)]
        dataset: String,
        #[command(flatten)]
        lime: LimeArgs,
        /// Explain at most this many test documents.
        #[arg(long)]
        max_test: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for report.json and CSV files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Trust F1 of simulated users per classifier and explainer.
    EvalTrust {
        #[arg(long)]
        dataset: String,
        #[command(flatten)]
        lime: LimeArgs,
        #[arg(long, default_value_t = 25)]
        runs: usize,
        #[arg(long)]
        max_test: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Choose between classifier pairs after seeing picked explanations.
    EvalSelect {
        #[arg(long)]
        dataset: String,
        /// Number of classifier pairs.
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Pick budgets, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15, 20, 25, 30])]
        budget: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Perturbation samples per explanation.
        #[arg(long, default_value_t = 1000)]
        n_samples: usize,
        #[arg(long, default_value_t = 0.25)]
        sigma: f64,
        /// Use 0.1% / 5% gap thresholds instead of 1% / 3%.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        max_val: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP/JSON API.
    Serve {
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Datasets to register at startup, as for --dataset elsewhere.
        #[arg(long)]
        dataset: Vec<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 5000)]
        n_samples: usize,
        #[arg(long, default_value_t = 0.25)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Held-out documents explained per session round.
        #[arg(long, default_value_t = 100)]
        session_pool: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SynthData { .. } => "synth-data",
            Command::Train { .. } => "train",
            Command::Explain { .. } => "explain",
            Command::Pick { .. } => "pick",
            Command::EvalFaithfulness { .. } => "eval-faithfulness",
            Command::EvalTrust { .. } => "eval-trust",
            Command::EvalSelect { .. } => "eval-select",
            Command::Serve { .. } => "serve",
        }
    }

    fn seed(&self) -> u64 {
        match *self {
            Command::SynthData { seed, .. }
            | Command::Train { seed, .. }
            | Command::Explain { seed, .. }
            | Command::Pick { seed, .. }
            | Command::EvalFaithfulness { seed, .. }
            | Command::EvalTrust { seed, .. }
            | Command::EvalSelect { seed, .. }
            | Command::Serve { seed, .. } => seed,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    log::info!(
        "{} seed={} config={}",
        cli.command.name(),
        cli.command.seed(),
        serde_json::to_string(&cli.command).unwrap_or_default()
    );
    match execute(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command and returns its one-line summary.
pub fn execute(command: Command) -> CliResult<String> {
    match command {
        Command::SynthData {
            signal,
            n_docs,
            seed,
            out,
        } => {
            let corpus = synth(&signal, n_docs, seed)?;
            let mut buf = Vec::new();
            data::write_jsonl(&corpus, &mut buf).map_err(|source| io(&out, source))?;
            write_file(&out, &buf)?;
            Ok(format!("wrote {} documents to {}", corpus.len(), out.display()))
        }
        Command::Train {
            data,
            kind,
            params,
            seed,
            out,
        } => {
            let split = Split::load(&data)?;
            let spec = model_spec(&kind, params.as_deref())?;
            let model = models::train(&spec, &split.train, &split.vocab.hash(), seed)?;
            let json = model.to_json()?;
            write_file(&out, json.as_bytes())?;
            Ok(format!(
                "trained {} on {}: train accuracy {:.4}, held-out accuracy {:.4}, weights {}, wrote {}",
                spec.kind(),
                split.name,
                model.accuracy(&split.train),
                model.accuracy(&split.heldout),
                &model.weights_hash()[..16],
                out.display()
            ))
        }
        Command::Explain {
            data,
            model,
            instance,
            text,
            lime,
            seed,
            out,
        } => {
            let split = Split::load(&data)?;
            let model = load_model(&model, &split.vocab)?;
            let doc = match (instance, text) {
                (Some(i), _) => split.heldout_doc(i)?.clone(),
                (None, Some(t)) => Document::new("text", t, None),
                (None, None) => return Err(CliError::Usage("give --instance or --text".into())),
            };
            let cfg = lime_config(&lime, seed)?;
            let e = explain_instance_excluding(&model, &doc, &split.vocab, &cfg, &model.removed)?;
            emit(out.as_deref(), &e)?;
            let words: Vec<String> = e.features.iter().map(|f| format!("{}:{:+.3}", f.token, f.weight)).collect();
            Ok(format!(
                "explained {} (class {}, fidelity {:.3}): {}",
                e.instance_id,
                e.target_class,
                e.fidelity,
                words.join(" ")
            ))
        }
        Command::Pick {
            data,
            model,
            budget,
            instances,
            lime,
            seed,
            out,
        } => {
            let split = Split::load(&data)?;
            let model = load_model(&model, &split.vocab)?;
            let n = instances.unwrap_or(split.heldout_docs.len()).min(split.heldout_docs.len());
            let result = pick(&model, &split, n, budget, &lime, seed)?;
            emit(out.as_deref(), &result)?;
            Ok(format!(
                "picked {} of {} held-out documents, coverage {:.4}: {:?}",
                result.selected.len(),
                n,
                result.coverage_trace.last().copied().unwrap_or(0.0),
                result.selected
            ))
        }
        Command::EvalFaithfulness {
            dataset,
            lime,
            max_test,
            seed,
            out,
        } => {
            let corpus = load_dataset(&dataset)?;
            let cfg = FaithfulnessConfig {
                k: lime.k,
                n_samples: lime.n_samples,
                sigma: lime.sigma,
                max_test,
                seed,
                ..Default::default()
            };
            let report = evalsuite::faithfulness_experiment(&corpus, &cfg)?;
            write_report(&out, &report)?;
            Ok(format!("faithfulness recall: {}; wrote {}", one_line(&report), out.display()))
        }
        Command::EvalTrust {
            dataset,
            lime,
            runs,
            max_test,
            seed,
            out,
        } => {
            let corpus = load_dataset(&dataset)?;
            let cfg = TrustConfig {
                runs,
                k: lime.k,
                n_samples: lime.n_samples,
                sigma: lime.sigma,
                max_test,
                seed,
                ..Default::default()
            };
            let report = evalsuite::trust_f1_experiment(&corpus, &cfg)?;
            write_report(&out, &report)?;
            Ok(format!("trust F1: {}; wrote {}", one_line(&report), out.display()))
        }
        Command::EvalSelect {
            dataset,
            runs,
            budget,
            k,
            n_samples,
            sigma,
            strict,
            max_val,
            seed,
            out,
        } => {
            if budget.is_empty() || budget.contains(&0) {
                return Err(CliError::Usage("--budget needs positive values".into()));
            }
            let corpus = load_dataset(&dataset)?;
            let cfg = ModelSelectionConfig {
                n_pairs: runs,
                budgets: budget,
                pair_search: if strict {
                    PairSearchConfig::strict()
                } else {
                    PairSearchConfig::desk()
                },
                k,
                n_samples,
                sigma,
                max_val,
                seed,
                ..Default::default()
            };
            let report = evalsuite::model_selection_experiment(&corpus, &cfg)?;
            write_report(&out, &report)?;
            Ok(format!("selection accuracy: {}; wrote {}", one_line(&report), out.display()))
        }
        Command::Serve {
            data_dir,
            listen,
            dataset,
            k,
            n_samples,
            sigma,
            seed,
            session_pool,
        } => {
            let cfg = lime_service::ServiceConfig {
                data_dir,
                listen,
                default_k: k,
                default_n: n_samples,
                default_sigma: sigma,
                master_seed: seed,
                session_pool,
            };
            KernelConfig::new(sigma)?;
            let state = Arc::new(lime_service::AppState::open(cfg)?);
            for d in &dataset {
                let info = state.register_dataset(load_dataset(d)?)?;
                log::info!("registered {} ({} documents)", info.name, info.n_docs);
            }
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
            rt.block_on(lime_service::serve(state))
                .map_err(|e| CliError::Runtime(format!("server failed: {e}")))?;
            Ok("server stopped".into())
        }
    }
}

fn io(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io(path, e))
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value).map_err(lime_core::Error::from)?;
    match out {
        Some(path) => write_file(path, format!("{json}\n").as_bytes()),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn synth(signal: &str, n_docs: usize, seed: u64) -> CliResult<LabeledCorpus> {
    let cfg = match signal {
        "strong" => SynthConfig::strong_signal(n_docs),
        "moderate" => SynthConfig::moderate_signal(n_docs),
        "none" => SynthConfig::no_signal(n_docs),
        other => return Err(CliError::Usage(format!("unknown signal `{other}`"))),
    };
    let mut corpus = data::synth_corpus(&cfg, seed)?;
    corpus.name = format!("synth-{signal}-{n_docs}-{seed}");
    Ok(corpus)
}

/// Loads a JSONL file or generates a `synth:<signal>:<n_docs>[:<seed>]` corpus.
pub fn load_dataset(spec: &str) -> CliResult<LabeledCorpus> {
    let Some(rest) = spec.strip_prefix("synth:") else {
        return Ok(data::load_jsonl(spec)?);
    };
    let parts: Vec<&str> = rest.split(':').collect();
    let bad = || CliError::Usage(format!("bad synthetic dataset `{spec}`, expected synth:<signal>:<n_docs>[:<seed>]"));
    let (signal, n, seed) = match parts.as_slice() {
        [s, n] => (*s, n.parse().map_err(|_| bad())?, 0),
        [s, n, seed] => (*s, n.parse().map_err(|_| bad())?, seed.parse().map_err(|_| bad())?),
        _ => return Err(bad()),
    };
    synth(signal, n, seed)
}

fn model_spec(kind: &str, params: Option<&str>) -> CliResult<ModelSpec> {
    let base = ModelSpec::from_kind(kind).ok_or_else(|| CliError::Usage(format!("unknown model kind `{kind}`")))?;
    let Some(params) = params else {
        return Ok(base);
    };
    let mut obj: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(params).map_err(|e| CliError::Usage(format!("--params: {e}")))?;
    obj.insert("kind".into(), base.kind().into());
    let spec: ModelSpec =
        serde_json::from_value(obj.into()).map_err(|e| CliError::Usage(format!("--params: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn load_model(path: &Path, vocab: &Vocabulary) -> CliResult<TrainedModel> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    let model = TrainedModel::from_json(&text)?;
    if model.vocabulary_hash != vocab.hash() {
        return Err(CliError::Runtime(format!(
            "{} was trained on a different vocabulary than this dataset",
            path.display()
        )));
    }
    Ok(model)
}

fn lime_config(args: &LimeArgs, seed: u64) -> CliResult<LimeConfig> {
    Ok(LimeConfig {
        k: args.k,
        n_samples: args.n_samples,
        kernel: KernelConfig::new(args.sigma)?,
        seed,
        target_class: None,
    })
}

/// A dataset with its vocabulary and train/held-out split.
pub struct Split {
    pub name: String,
    pub vocab: Vocabulary,
    pub train: TrainingSet,
    pub heldout: TrainingSet,
    pub heldout_docs: Vec<Document>,
}

impl Split {
    pub fn load(args: &SplitArgs) -> CliResult<Self> {
        let corpus = load_dataset(&args.dataset)?;
        let vocab = corpus.vocabulary();
        let (train, heldout) = data::split(&corpus, TRAIN_FRACTION, args.split_seed)?;
        Ok(Split {
            name: corpus.name,
            train: TrainingSet::from_corpus(&train, &vocab),
            heldout: TrainingSet::from_corpus(&heldout, &vocab),
            heldout_docs: heldout.docs,
            vocab,
        })
    }

    fn heldout_doc(&self, i: usize) -> CliResult<&Document> {
        self.heldout_docs.get(i).ok_or_else(|| {
            CliError::Usage(format!(
                "--instance {i} out of range for {} held-out documents",
                self.heldout_docs.len()
            ))
        })
    }
}

#[derive(Debug, Serialize)]
pub struct PickOutput {
    /// Held-out indices in pick order.
    pub selected: Vec<usize>,
    pub coverage_trace: Vec<f64>,
    pub explanations: Vec<Explanation>,
}

/// Explains the first `n` held-out documents (document `i` with seed
/// substream `i`) and greedily picks `budget` of them.
fn pick(model: &TrainedModel, split: &Split, n: usize, budget: usize, args: &LimeArgs, seed: u64) -> CliResult<PickOutput> {
    if budget == 0 {
        return Err(CliError::Usage("--budget must be at least 1".into()));
    }
    let mut kept = Vec::new();
    let mut exps = Vec::new();
    for (i, doc) in split.heldout_docs.iter().take(n).enumerate() {
        let cfg = lime_config(args, derive_seed(seed, i as u64))?;
        match explain_instance_excluding(model, doc, &split.vocab, &cfg, &model.removed) {
            Ok(e) => {
                kept.push(i);
                exps.push(e);
            }
            Err(lime_core::Error::DegenerateInstance) => log::warn!("skipping {}: no known words", doc.id),
            Err(e) => return Err(e.into()),
        }
    }
    if exps.is_empty() {
        return Err(CliError::Runtime("no explainable held-out documents".into()));
    }
    let w = build_matrix(&exps, split.vocab.len())?;
    let result = submodular_pick(&w, budget)?;
    Ok(PickOutput {
        selected: result.selected.iter().map(|&r| kept[r]).collect(),
        explanations: result.selected.iter().map(|&r| exps[r].clone()).collect(),
        coverage_trace: result.coverage_trace,
    })
}

/// A labelled table row; `None` marks a missing cell.
pub type PivotRow = (String, Vec<Option<f64>>);

/// Pivots a report's summary into a table.
///
/// Metrics named `row/column` become one row per prefix; metrics with a
/// budget become one row per name with a column per budget.
pub fn pivot(report: &ExperimentReport) -> (Vec<String>, Vec<PivotRow>) {
    let mut columns: Vec<String> = Vec::new();
    let mut rows: Vec<(String, BTreeMap<String, f64>)> = Vec::new();
    for m in &report.summary {
        let (row, col) = match (m.budget, m.name.split_once('/')) {
            (Some(b), _) => (m.name.clone(), format!("B={b}")),
            (None, Some((r, c))) => (r.to_owned(), c.to_owned()),
            (None, None) => (m.name.clone(), "value".to_owned()),
        };
        if !columns.contains(&col) {
            columns.push(col.clone());
        }
        match rows.iter_mut().find(|(r, _)| *r == row) {
            Some((_, cells)) => {
                cells.insert(col, m.mean);
            }
            None => rows.push((row, BTreeMap::from([(col, m.mean)]))),
        }
    }
    let table = rows
        .into_iter()
        .map(|(r, cells)| (r, columns.iter().map(|c| cells.get(c).copied()).collect()))
        .collect();
    (columns, table)
}

fn one_line(report: &ExperimentReport) -> String {
    let (columns, rows) = pivot(report);
    rows.iter()
        .map(|(r, cells)| {
            let vals: Vec<String> = columns
                .iter()
                .zip(cells)
                .filter_map(|(c, v)| v.map(|v| format!("{c}={v:.3}")))
                .collect();
            format!("{r} {}", vals.join(" "))
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Writes `report.json`, `summary.csv`, `runs.csv` and `table.csv` into `dir`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write_file(&dir.join("report.json"), report.to_json()?.as_bytes())?;
    let mut buf = Vec::new();
    report.write_summary_csv(&mut buf)?;
    write_file(&dir.join("summary.csv"), &buf)?;
    buf.clear();
    report.write_runs_csv(&mut buf)?;
    write_file(&dir.join("runs.csv"), &buf)?;

    let (columns, rows) = pivot(report);
    let path = dir.join("table.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut header = vec![String::new()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (r, cells) in &rows {
        let mut rec = vec![r.clone()];
        rec.extend(cells.iter().map(|v| v.map(|v| format!("{v:.4}")).unwrap_or_default()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lime_core::evalsuite::MetricSummary;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["lime"]), 2);
        assert_eq!(run(["lime", "explain", "--bogus"]), 2);
        assert_eq!(run(["lime", "train", "--dataset", "x", "--kind", "svm", "--out", "m.json"]), 2);
    }

    #[test]
    fn synthetic_dataset_specs() {
        let c = load_dataset("synth:strong:50:3").unwrap();
        assert_eq!(c.len(), 50);
        assert_eq!(c.name, "synth-strong-50-3");
        assert!(matches!(load_dataset("synth:strong"), Err(CliError::Usage(_))));
        assert!(matches!(load_dataset("synth:loud:50"), Err(CliError::Usage(_))));
        assert!(matches!(load_dataset("/no/such/file.jsonl"), Err(CliError::Core(_))));
    }

    #[test]
    fn model_params() {
        let spec = model_spec("lr", Some(r#"{"l2": 0.5}"#)).unwrap();
        assert!(matches!(spec, ModelSpec::Logreg { l2, .. } if l2 == 0.5));
        assert!(matches!(model_spec("knn", Some(r#"{"k": 0}"#)), Err(CliError::Core(_))));
        assert!(matches!(model_spec("knn", Some("[")), Err(CliError::Usage(_))));
    }

    #[test]
    fn pivot_tables() {
        let mut report: ExperimentReport = serde_json::from_value(serde_json::json!({
            "kind": "t", "config": {}, "seed": 0, "run_seeds": [], "summary": [], "runs": []
        }))
        .unwrap();
        report.summary = vec![
            MetricSummary::from_values("lr/lime", None, &[1.0]),
            MetricSummary::from_values("lr/random", None, &[0.2]),
            MetricSummary::from_values("dt/lime", None, &[0.9]),
        ];
        let (cols, rows) = pivot(&report);
        assert_eq!(cols, vec!["lime", "random"]);
        assert_eq!(rows[1], ("dt".to_string(), vec![Some(0.9), None]));
        report.summary = vec![
            MetricSummary::from_values("sp-lime", Some(5), &[0.8]),
            MetricSummary::from_values("sp-lime", Some(10), &[0.7]),
        ];
        let (cols, rows) = pivot(&report);
        assert_eq!(cols, vec!["B=5", "B=10"]);
        assert_eq!(rows, vec![("sp-lime".to_string(), vec![Some(0.8), Some(0.7)])]);
    }
}

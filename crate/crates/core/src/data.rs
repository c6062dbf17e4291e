//! Corpora: JSONL ingestion, stratified splits, the synthetic generator and the
//! artificial-feature tooling used by the simulated-user experiments.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::textrepr::{tokenize, Document, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub name: String,
    pub docs: Vec<Document>,
    pub split_seed: u64,
}

impl LabeledCorpus {
    pub fn new(name: impl Into<String>, docs: Vec<Document>) -> Self {
        LabeledCorpus {
            name: name.into(),
            docs,
            split_seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Labels as 0/1; unlabeled documents count as class 0.
    pub fn labels(&self) -> Vec<u8> {
        self.docs.iter().map(|d| d.label.unwrap_or(0)).collect()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for doc in &self.docs {
            if let Some(l) = doc.label {
                counts[l as usize] += 1;
            }
        }
        counts
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::build(&self.docs)
    }
}

#[derive(Deserialize)]
struct RawLine {
    id: Option<String>,
    text: Option<serde_json::Value>,
    label: Option<serde_json::Value>,
}

/// Reads one `{"text": .., "label": 0|1}` object per line.
///
/// Blank lines are skipped. An optional string `id` names the document;
/// otherwise it is `line-<k>` with `k` the 1-based line number.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        if let Some(doc) = parse_line(&line, i + 1)? {
            docs.push(doc);
        }
    }
    Ok(LabeledCorpus::new(name, docs))
}

/// Parses JSONL content held in memory.
pub fn parse_jsonl(name: &str, content: &str) -> Result<LabeledCorpus> {
    let mut docs = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if let Some(doc) = parse_line(line, i + 1)? {
            docs.push(doc);
        }
    }
    Ok(LabeledCorpus::new(name, docs))
}

fn parse_line(line: &str, line_no: usize) -> Result<Option<Document>> {
    if line.trim().is_empty() {
        return Ok(None);
    }
    let raw: RawLine = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let schema = |message: &str| Error::Schema {
        line: line_no,
        message: message.to_owned(),
    };
    let text = match raw.text {
        Some(serde_json::Value::String(s)) => s,
        Some(_) => return Err(schema("field `text` must be a string")),
        None => return Err(schema("missing field `text`")),
    };
    let label = match raw.label {
        Some(serde_json::Value::Number(n)) => match n.as_i64() {
            Some(l @ 0..=1) => l as u8,
            Some(_) => return Err(schema("label out of range")),
            None => return Err(schema("field `label` must be an integer")),
        },
        Some(_) => return Err(schema("field `label` must be an integer")),
        None => return Err(schema("missing field `label`")),
    };
    let id = raw.id.unwrap_or_else(|| format!("line-{line_no}"));
    Ok(Some(Document::new(id, text, Some(label))))
}

pub fn write_jsonl(corpus: &LabeledCorpus, mut out: impl Write) -> std::io::Result<()> {
    for doc in &corpus.docs {
        let line = serde_json::json!({ "id": doc.id, "text": doc.text, "label": doc.label.unwrap_or(0) });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Stratified shuffle split. Each class contributes `round(train_frac * n_c)` documents
/// to the training side; both sides keep the corpus order.
pub fn split(corpus: &LabeledCorpus, train_frac: f64, seed: u64) -> Result<(LabeledCorpus, LabeledCorpus)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Range(format!("train fraction {train_frac} not in (0, 1)")));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, doc) in corpus.docs.iter().enumerate() {
        match doc.label {
            Some(l @ 0..=1) => by_class[l as usize].push(i),
            _ => {
                return Err(Error::Stratification(format!(
                    "document `{}` has no binary label",
                    doc.id
                )))
            }
        }
    }
    let mut in_train = vec![false; corpus.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            return Err(Error::Stratification(format!("class {class} has no documents")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, class as u64));
        members.shuffle(&mut rng);
        let take = (train_frac * members.len() as f64).round() as usize;
        for &i in &members[..take] {
            in_train[i] = true;
        }
    }
    let pick = |want: bool, suffix: &str| LabeledCorpus {
        name: format!("{}/{suffix}", corpus.name),
        docs: corpus
            .docs
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == want)
            .map(|(d, _)| d.clone())
            .collect(),
        split_seed: seed,
    };
    Ok((pick(true, "train"), pick(false, "test")))
}

/// Artificial tokens whose class-conditional rates differ between the
/// train/validation side and the test side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyFeatureSpec {
    pub feature_tokens: Vec<String>,
    /// Presence rate among (class 0, class 1) documents in train and validation.
    pub train_rates: (f64, f64),
    /// Presence rate among documents of either class in test.
    pub test_rate: f64,
}

impl Default for NoisyFeatureSpec {
    fn default() -> Self {
        NoisyFeatureSpec {
            feature_tokens: (0..10).map(|i| format!("zzartificial{i}")).collect(),
            train_rates: (0.10, 0.20),
            test_rate: 0.10,
        }
    }
}

/// Appends each artificial token to an exact, uniformly chosen share of every
/// class: `train_rates` on `train` and `val`, `test_rate` on `test`.
pub fn inject_noisy_features(
    train: &LabeledCorpus,
    val: &LabeledCorpus,
    test: &LabeledCorpus,
    spec: &NoisyFeatureSpec,
    seed: u64,
) -> Result<(LabeledCorpus, LabeledCorpus, LabeledCorpus)> {
    for rate in [spec.train_rates.0, spec.train_rates.1, spec.test_rate] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Range(format!("injection rate {rate} not in [0, 1]")));
        }
    }
    for token in &spec.feature_tokens {
        if tokenize(token) != [token.clone()] {
            return Err(Error::Config(format!("`{token}` is not a single lowercase token")));
        }
        let collides = [train, val, test]
            .iter()
            .any(|c| c.docs.iter().any(|d| d.contains_token(token)));
        if collides {
            return Err(Error::Collision(token.clone()));
        }
    }
    let sides = [
        (train, spec.train_rates),
        (val, spec.train_rates),
        (test, (spec.test_rate, spec.test_rate)),
    ];
    let mut out = Vec::with_capacity(3);
    for (side, (corpus, rates)) in sides.into_iter().enumerate() {
        let mut corpus = corpus.clone();
        let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, doc) in corpus.docs.iter().enumerate() {
            members[doc.label.unwrap_or(0) as usize].push(i);
        }
        let mut appended: Vec<Vec<&str>> = vec![Vec::new(); corpus.len()];
        for (t, token) in spec.feature_tokens.iter().enumerate() {
            for (class, rate) in [rates.0, rates.1].into_iter().enumerate() {
                let pool = &members[class];
                let count = (rate * pool.len() as f64).round() as usize;
                let stream = ((side * 1000 + t) * 2 + class) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream));
                for p in index::sample(&mut rng, pool.len(), count) {
                    appended[pool[p]].push(token);
                }
            }
        }
        for (doc, extra) in corpus.docs.iter_mut().zip(appended) {
            if !extra.is_empty() {
                let text = format!("{} {}", doc.text, extra.join(" "));
                doc.set_text(text);
            }
        }
        out.push(corpus);
    }
    let test = out.pop().expect("three sides");
    let val = out.pop().expect("three sides");
    let train = out.pop().expect("three sides");
    Ok((train, val, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UntrustworthySet {
    pub feature_ids: BTreeSet<usize>,
    pub fraction: f64,
    pub seed: u64,
}

impl UntrustworthySet {
    pub fn contains(&self, column: usize) -> bool {
        self.feature_ids.contains(&column)
    }
}

/// Uniform subset of `round(fraction * vocab_size)` columns.
pub fn pick_untrustworthy(vocab_size: usize, fraction: f64, seed: u64) -> Result<UntrustworthySet> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Range(format!("fraction {fraction} not in (0, 1)")));
    }
    if vocab_size < 4 {
        return Err(Error::Config(format!(
            "vocabulary of {vocab_size} tokens is too small to designate untrustworthy features"
        )));
    }
    let size = (fraction * vocab_size as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(UntrustworthySet {
        feature_ids: index::sample(&mut rng, vocab_size, size).into_iter().collect(),
        fraction,
        seed,
    })
}

/// Tokens whose presence probability depends on the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSignal {
    pub n_tokens: usize,
    /// Presence probability in the class a token favours.
    pub favoured_rate: f64,
    /// Presence probability in the other class.
    pub other_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub vocab_size: usize,
    /// Zipf exponent of the background word distribution; larger is sparser.
    pub zipf_exponent: f64,
    pub signal: ClassSignal,
    pub min_len: usize,
    pub max_len: usize,
}

impl SynthConfig {
    /// Signal tokens present in 60% of their class and 40% of the other.
    pub fn moderate_signal(n_docs: usize) -> Self {
        let mut cfg = Self::strong_signal(n_docs);
        cfg.signal.favoured_rate = 0.6;
        cfg.signal.other_rate = 0.4;
        cfg
    }

    /// Signal tokens present in 90% of their class and 10% of the other.
    pub fn strong_signal(n_docs: usize) -> Self {
        SynthConfig {
            n_docs,
            vocab_size: 1000,
            zipf_exponent: 1.0,
            signal: ClassSignal {
                n_tokens: 10,
                favoured_rate: 0.9,
                other_rate: 0.1,
            },
            min_len: 20,
            max_len: 60,
        }
    }

    pub fn no_signal(n_docs: usize) -> Self {
        let mut cfg = SynthConfig::strong_signal(n_docs);
        cfg.signal.favoured_rate = 0.5;
        cfg.signal.other_rate = 0.5;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalToken {
    pub token: String,
    pub favours: u8,
}

/// Token string for synthetic word `id`.
pub fn synth_token(id: usize) -> String {
    format!("w{id:05}")
}

/// Balanced synthetic corpus of 20–60 token documents.
pub fn synth_corpus(cfg: &SynthConfig, seed: u64) -> Result<LabeledCorpus> {
    synth_corpus_with_signal(cfg, seed).map(|(c, _)| c)
}

/// Like [`synth_corpus`], also returning the planted signal tokens.
///
/// Signal token `i` favours class 1 when `i` is even and class 0 otherwise.
pub fn synth_corpus_with_signal(cfg: &SynthConfig, seed: u64) -> Result<(LabeledCorpus, Vec<SignalToken>)> {
    if cfg.n_docs < 10 {
        return Err(Error::Config(format!("need at least 10 documents, got {}", cfg.n_docs)));
    }
    if cfg.vocab_size < cfg.signal.n_tokens {
        return Err(Error::Config(format!(
            "vocabulary of {} cannot hold {} signal tokens",
            cfg.vocab_size, cfg.signal.n_tokens
        )));
    }
    if cfg.vocab_size == cfg.signal.n_tokens {
        return Err(Error::Config("no background vocabulary left after signal tokens".into()));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config(format!(
            "invalid length range {}..={}",
            cfg.min_len, cfg.max_len
        )));
    }
    for rate in [cfg.signal.favoured_rate, cfg.signal.other_rate] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Range(format!("signal rate {rate} not in [0, 1]")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signal_ids: Vec<usize> = index::sample(&mut rng, cfg.vocab_size, cfg.signal.n_tokens).into_vec();
    let signal: Vec<SignalToken> = signal_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| SignalToken {
            token: synth_token(id),
            favours: if i % 2 == 0 { 1 } else { 0 },
        })
        .collect();
    let signal_set: BTreeSet<usize> = signal_ids.iter().copied().collect();
    let mut background: Vec<usize> = (0..cfg.vocab_size).filter(|j| !signal_set.contains(j)).collect();
    background.shuffle(&mut rng);
    let zipf = WeightedIndex::new(
        (1..=background.len()).map(|rank| (rank as f64).powf(-cfg.zipf_exponent)),
    )
    .map_err(|e| Error::Config(e.to_string()))?;

    let mut labels: Vec<u8> = (0..cfg.n_docs).map(|i| (i >= cfg.n_docs / 2) as u8).collect();
    labels.shuffle(&mut rng);

    let mut docs = Vec::with_capacity(cfg.n_docs);
    for (i, &label) in labels.iter().enumerate() {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut words: Vec<usize> = Vec::with_capacity(len);
        for (s, &id) in signal.iter().zip(&signal_ids) {
            let p = if s.favours == label {
                cfg.signal.favoured_rate
            } else {
                cfg.signal.other_rate
            };
            if words.len() < len && rng.gen_bool(p) {
                words.push(id);
            }
        }
        while words.len() < len {
            words.push(background[zipf.sample(&mut rng)]);
        }
        words.shuffle(&mut rng);
        let text = words.iter().map(|&w| synth_token(w)).collect::<Vec<_>>().join(" ");
        docs.push(Document::new(format!("synth-{i}"), text, Some(label)));
    }
    let corpus = LabeledCorpus {
        name: format!("synth-{seed}"),
        docs,
        split_seed: seed,
    };
    Ok((corpus, signal))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(n: usize) -> LabeledCorpus {
        LabeledCorpus::new(
            "toy",
            (0..n)
                .map(|i| Document::new(format!("d{i}"), format!("word{i} common"), Some((i % 2) as u8)))
                .collect(),
        )
    }

    #[test]
    fn jsonl_parsing() {
        let c = parse_jsonl("t", "{\"text\":\"a b\",\"label\":0}\n{\"text\":\"c\",\"label\":1}\n").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.docs[1].id, "line-2");
        let named = parse_jsonl("t", "{\"id\":\"r7\",\"text\":\"a\",\"label\":1}").unwrap();
        assert_eq!(named.docs[0].id, "r7");
        assert!(parse_jsonl("t", "").unwrap().is_empty());
        match parse_jsonl("t", "{\"text\":\"a\",\"label\":0}\n{\"text\":\"x\",\"label\":2}") {
            Err(Error::Schema { line, message }) => {
                assert_eq!(line, 2);
                assert_eq!(message, "label out of range");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_jsonl("t", "{\"label\":1}"), Err(Error::Schema { line: 1, .. })));
        assert!(matches!(parse_jsonl("t", "{\"text\": oops"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn jsonl_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let c = balanced(6);
        write_jsonl(&c, fs::File::create(&path).unwrap()).unwrap();
        let back = load_jsonl(&path).unwrap();
        assert_eq!(back.name, "c");
        assert_eq!(back.labels(), c.labels());
        assert_eq!(back.docs[3].text, c.docs[3].text);
        assert_eq!(back.docs[3].id, "d3");
    }

    #[test]
    fn split_eighty_twenty() {
        let c = balanced(2000);
        let (train, test) = split(&c, 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (1600, 400));
        assert_eq!(train.class_counts(), [800, 800]);
    }

    #[test]
    fn split_small_and_deterministic() {
        let c = balanced(4);
        let (a, b) = split(&c, 0.5, 3).unwrap();
        assert_eq!(a.class_counts(), [1, 1]);
        assert_eq!(b.class_counts(), [1, 1]);
        assert_eq!(split(&c, 0.5, 3).unwrap().0, a);
    }

    #[test]
    fn split_is_a_partition() {
        let c = balanced(37);
        let (a, b) = split(&c, 0.7, 11).unwrap();
        let mut ids: Vec<_> = a.docs.iter().chain(&b.docs).map(|d| d.id.clone()).collect();
        ids.sort();
        let mut all: Vec<_> = c.docs.iter().map(|d| d.id.clone()).collect();
        all.sort();
        assert_eq!(ids, all);
    }

    #[test]
    fn split_needs_both_classes() {
        let c = LabeledCorpus::new("one", vec![Document::new("a", "x", Some(1))]);
        assert!(matches!(split(&c, 0.5, 0), Err(Error::Stratification(_))));
        assert!(matches!(split(&balanced(4), 1.0, 0), Err(Error::Range(_))));
    }

    #[test]
    fn injection_rates() {
        let train = balanced(1000);
        let val = balanced(10);
        let test = balanced(400);
        let spec = NoisyFeatureSpec::default();
        let (tr, _, te) = inject_noisy_features(&train, &val, &test, &spec, 5).unwrap();
        for token in &spec.feature_tokens {
            let per_class = |c: &LabeledCorpus| {
                let mut n = [0usize; 2];
                for d in &c.docs {
                    if d.contains_token(token) {
                        n[d.label.unwrap() as usize] += 1;
                    }
                }
                n
            };
            assert_eq!(per_class(&tr), [50, 100]);
            assert_eq!(per_class(&te), [20, 20]);
        }
        // natural text untouched
        for (before, after) in train.docs.iter().zip(&tr.docs) {
            assert!(after.text.starts_with(&before.text));
            for (t, c) in &before.counts {
                assert_eq!(after.counts.get(t), Some(c));
            }
        }
    }

    #[test]
    fn injection_zero_rates_and_collisions() {
        let c = balanced(20);
        let spec = NoisyFeatureSpec {
            train_rates: (0.0, 0.0),
            test_rate: 0.0,
            ..Default::default()
        };
        let (a, b, d) = inject_noisy_features(&c, &c, &c, &spec, 1).unwrap();
        assert_eq!((&a, &b, &d), (&c, &c, &c));
        let clash = NoisyFeatureSpec {
            feature_tokens: vec!["common".into()],
            ..Default::default()
        };
        assert!(matches!(
            inject_noisy_features(&c, &c, &c, &clash, 1),
            Err(Error::Collision(t)) if t == "common"
        ));
    }

    #[test]
    fn untrustworthy_sizes() {
        let u = pick_untrustworthy(100, 0.25, 4).unwrap();
        assert_eq!(u.feature_ids.len(), 25);
        assert!(u.feature_ids.iter().all(|&j| j < 100));
        assert_eq!(pick_untrustworthy(100, 0.25, 4).unwrap(), u);
        assert_eq!(pick_untrustworthy(4, 0.25, 0).unwrap().feature_ids.len(), 1);
        assert!(matches!(pick_untrustworthy(10, 1.0, 0), Err(Error::Range(_))));
        assert!(matches!(pick_untrustworthy(10, 0.0, 0), Err(Error::Range(_))));
    }

    #[test]
    fn synth_shape() {
        let cfg = SynthConfig::strong_signal(200);
        let (c, signal) = synth_corpus_with_signal(&cfg, 8).unwrap();
        assert_eq!(c.class_counts(), [100, 100]);
        assert_eq!(signal.len(), 10);
        for doc in &c.docs {
            let n: u32 = doc.counts.values().sum();
            assert!((20..=60).contains(&n), "length {n}");
        }
        assert_eq!(synth_corpus(&cfg, 8).unwrap(), c);
        assert_ne!(synth_corpus(&cfg, 9).unwrap(), c);
    }

    #[test]
    fn synth_signal_gap() {
        let cfg = SynthConfig::strong_signal(1000);
        let (c, signal) = synth_corpus_with_signal(&cfg, 2).unwrap();
        for s in &signal {
            let mut present = [0usize; 2];
            for d in &c.docs {
                if d.contains_token(&s.token) {
                    present[d.label.unwrap() as usize] += 1;
                }
            }
            let fav = present[s.favours as usize] as f64 / 500.0;
            let other = present[1 - s.favours as usize] as f64 / 500.0;
            assert!((fav - 0.9).abs() < 0.06, "{fav}");
            assert!((other - 0.1).abs() < 0.06, "{other}");
        }
    }

    #[test]
    fn synth_config_errors() {
        let mut cfg = SynthConfig::strong_signal(100);
        cfg.vocab_size = 5;
        assert!(matches!(synth_corpus(&cfg, 0), Err(Error::Config(_))));
        let cfg = SynthConfig::strong_signal(5);
        assert!(matches!(synth_corpus(&cfg, 0), Err(Error::Config(_))));
    }
}

//! Bag-of-words representations.
//!
//! Two spaces are involved when explaining a text prediction. Classifiers see
//! the *original* representation, a sparse vector of token counts. Explanations
//! live in the *interpretable* representation, a binary presence vector over
//! the vocabulary. This module maps between the two and draws the perturbed
//! neighbourhood that the surrogate model is fitted on.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Lowercased maximal runs of alphanumeric characters, in order of appearance.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A raw document together with its token counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Option<u8>,
    pub counts: BTreeMap<String, u32>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Option<u8>) -> Self {
        let text = text.into();
        let mut counts = BTreeMap::new();
        for token in tokenize(&text) {
            *counts.entry(token).or_insert(0) += 1;
        }
        Document {
            id: id.into(),
            text,
            label,
            counts,
        }
    }

    /// Replaces the text and recomputes the counts.
    pub fn set_text(&mut self, text: String) {
        *self = Document::new(std::mem::take(&mut self.id), text, self.label);
    }

    pub fn contains_token(&self, token: &str) -> bool {
        self.counts.contains_key(token)
    }
}

/// Ordered set of unique tokens; column `j` of every vector is token `j`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(vocab: Vocabulary) -> Self {
        vocab.tokens
    }
}

impl Vocabulary {
    /// Builds a vocabulary from explicit tokens. Duplicates keep their first position.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::default();
        for token in tokens {
            let token = token.into();
            if !vocab.index.contains_key(&token) {
                vocab.index.insert(token.clone(), vocab.tokens.len());
                vocab.tokens.push(token);
            }
        }
        vocab
    }

    /// Sorted union of every token occurring in `docs`.
    pub fn build<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let mut all = BTreeSet::new();
        for doc in docs {
            all.extend(doc.counts.keys().cloned());
        }
        Vocabulary::from_tokens(all)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, column: usize) -> Option<&str> {
        self.tokens.get(column).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Hex SHA-256 over the ordered token list.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for token in &self.tokens {
            hasher.update(token.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }

    /// Original-space count vector of `doc`; out-of-vocabulary tokens are dropped.
    pub fn count_vector(&self, doc: &Document) -> CountVector {
        CountVector::from_entries(
            doc.counts
                .iter()
                .filter_map(|(t, &c)| self.index(t).map(|j| (j, c as f64))),
        )
    }
}

/// Sparse non-negative count vector, entries sorted by column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountVector {
    entries: Vec<(usize, f64)>,
}

impl CountVector {
    /// Zero entries are discarded; duplicate columns are summed.
    pub fn from_entries<I: IntoIterator<Item = (usize, f64)>>(entries: I) -> Self {
        let mut entries: Vec<(usize, f64)> = entries.into_iter().filter(|e| e.1 != 0.0).collect();
        entries.sort_by_key(|e| e.0);
        entries.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        CountVector { entries }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        CountVector::from_entries(values.iter().copied().enumerate())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, column: usize) -> f64 {
        match self.entries.binary_search_by_key(&column, |e| e.0) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &CountVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Copy with the listed columns set to zero.
    pub fn without(&self, removed: &BTreeSet<usize>) -> CountVector {
        if removed.is_empty() {
            return self.clone();
        }
        CountVector {
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|e| !removed.contains(&e.0))
                .collect(),
        }
    }

    /// Copy keeping only columns accepted by `keep`.
    pub fn retain(&self, mut keep: impl FnMut(usize) -> bool) -> CountVector {
        CountVector {
            entries: self.entries.iter().copied().filter(|e| keep(e.0)).collect(),
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(j, v) in &self.entries {
            if j < dim {
                out[j] = v;
            }
        }
        out
    }
}

/// Binary presence vector `x'` over a vocabulary of size `dim`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InterpretableVector {
    dim: usize,
    support: Vec<usize>,
}

impl InterpretableVector {
    /// Builds a vector from active columns; duplicates are collapsed.
    pub fn new(dim: usize, support: impl IntoIterator<Item = usize>) -> Self {
        let mut support: Vec<usize> = support.into_iter().collect();
        support.sort_unstable();
        support.dedup();
        assert!(
            support.last().is_none_or(|&j| j < dim),
            "support column out of range for dimension {dim}"
        );
        InterpretableVector { dim, support }
    }

    pub fn zeros(dim: usize) -> Self {
        InterpretableVector {
            dim,
            support: Vec::new(),
        }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        InterpretableVector {
            dim: bits.len(),
            support: bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| b != 0)
                .map(|(j, _)| j)
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }

    pub fn contains(&self, column: usize) -> bool {
        self.support.binary_search(&column).is_ok()
    }

    pub fn bits(&self) -> Vec<u8> {
        let mut bits = vec![0u8; self.dim];
        for &j in &self.support {
            bits[j] = 1;
        }
        bits
    }

    pub fn is_subset_of(&self, other: &InterpretableVector) -> bool {
        self.support.iter().all(|&j| other.contains(j))
    }

    fn overlap(&self, other: &InterpretableVector) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.support.len() && j < other.support.len() {
            match self.support[i].cmp(&other.support[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// One row of the surrogate-fitting dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedSample {
    pub zprime: InterpretableVector,
    pub label: f64,
    pub weight: f64,
    pub distance: f64,
}

/// Presence vector of `doc`. Multiplicity collapses to presence.
pub fn vectorize(doc: &Document, vocab: &Vocabulary) -> InterpretableVector {
    InterpretableVector::new(
        vocab.len(),
        doc.counts.keys().filter_map(|t| vocab.index(t)),
    )
}

/// Draws `n` neighbours of `xprime`.
///
/// Sample 0 is `xprime` itself. Every other sample keeps `k ~ Uniform{1..m}`
/// of the `m` active columns, chosen uniformly without replacement.
pub fn sample_perturbations(
    xprime: &InterpretableVector,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<InterpretableVector>> {
    let m = xprime.nnz();
    if m == 0 {
        return Err(Error::DegenerateInstance);
    }
    if n == 0 {
        return Err(Error::Config("number of samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(n);
    out.push(xprime.clone());
    for _ in 1..n {
        let keep = rng.gen_range(1..=m);
        let mut support: Vec<usize> = index::sample(&mut rng, m, keep)
            .into_iter()
            .map(|p| xprime.support[p])
            .collect();
        support.sort_unstable();
        out.push(InterpretableVector {
            dim: xprime.dim,
            support,
        });
    }
    Ok(out)
}

/// `1 - a·b / (‖a‖‖b‖)` on binary vectors.
///
/// A zero vector against a non-zero one is at distance 1.
pub fn cosine_distance(a: &InterpretableVector, b: &InterpretableVector) -> Result<f64> {
    let (na, nb) = (a.nnz(), b.nnz());
    match (na, nb) {
        (0, 0) => Err(Error::UndefinedDistance),
        (0, _) | (_, 0) => Ok(1.0),
        _ => {
            let sim = a.overlap(b) as f64 / ((na as f64) * (nb as f64)).sqrt();
            Ok((1.0 - sim).clamp(0.0, 1.0))
        }
    }
}

/// Counts of `doc` restricted to the columns active in `keep`.
///
/// Kept words retain their full multiplicity; everything else is zeroed.
pub fn mask_counts(doc: &Document, keep: &InterpretableVector, vocab: &Vocabulary) -> CountVector {
    vocab.count_vector(doc).retain(|j| keep.contains(j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Vocabulary {
        Vocabulary::from_tokens(["a", "b", "c"])
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Sneeze, no fatigue!"), ["sneeze", "no", "fatigue"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Re: Re: posting"), ["re", "re", "posting"]);
    }

    #[test]
    fn vectorize_presence() {
        let v = abc();
        assert_eq!(vectorize(&Document::new("d", "a b b", None), &v).bits(), [1, 1, 0]);
        assert_eq!(vectorize(&Document::new("d", "", None), &v).bits(), [0, 0, 0]);
        assert_eq!(vectorize(&Document::new("d", "c a", None), &v).bits(), [1, 0, 1]);
        // out-of-vocabulary tokens are dropped
        assert_eq!(vectorize(&Document::new("d", "zz a", None), &v).support(), [0]);
    }

    #[test]
    fn vocabulary_is_bijective() {
        let docs = [
            Document::new("1", "the cat sat", Some(0)),
            Document::new("2", "the dog sat down", Some(1)),
        ];
        let vocab = Vocabulary::build(&docs);
        assert_eq!(vocab.len(), 5);
        for (j, t) in vocab.tokens().iter().enumerate() {
            assert_eq!(vocab.index(t), Some(j));
            assert_eq!(vocab.token(j), Some(t.as_str()));
        }
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&vocab).unwrap()).unwrap();
        assert_eq!(back.index("sat"), vocab.index("sat"));
    }

    #[test]
    fn sampling_contains_anchor_and_subsets() {
        let x = InterpretableVector::new(10, [1, 4, 7]);
        let samples = sample_perturbations(&x, 4, 9).unwrap();
        assert_eq!(samples.len(), 4);
        assert_eq!(samples[0], x);
        for z in &samples {
            assert!(z.is_subset_of(&x));
            assert!(z.nnz() >= 1);
        }
    }

    #[test]
    fn sampling_single_feature_is_constant() {
        let x = InterpretableVector::new(5, [3]);
        for z in sample_perturbations(&x, 50, 1).unwrap() {
            assert_eq!(z, x);
        }
    }

    #[test]
    fn sampling_rejects_empty_instance() {
        let x = InterpretableVector::zeros(5);
        assert!(matches!(sample_perturbations(&x, 5, 0), Err(Error::DegenerateInstance)));
    }

    #[test]
    fn sampling_mean_support_size() {
        let x = InterpretableVector::new(40, (0..40).step_by(2));
        assert_eq!(x.nnz(), 20);
        let samples = sample_perturbations(&x, 5000, 77).unwrap();
        let mean = samples.iter().map(|z| z.nnz() as f64).sum::<f64>() / 5000.0;
        assert!((mean - 10.5).abs() <= 0.5, "mean support {mean}");
    }

    #[test]
    fn cosine_examples() {
        let a = InterpretableVector::from_bits(&[1, 1, 0]);
        let b = InterpretableVector::from_bits(&[1, 0, 0]);
        let c = InterpretableVector::from_bits(&[0, 0, 1]);
        assert_eq!(cosine_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(cosine_distance(&a, &c).unwrap(), 1.0);
        let d = cosine_distance(&a, &b).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!((d - 0.29289).abs() < 1e-5);
        let z = InterpretableVector::zeros(3);
        assert!(matches!(cosine_distance(&z, &z), Err(Error::UndefinedDistance)));
        assert_eq!(cosine_distance(&z, &a).unwrap(), 1.0);
    }

    #[test]
    fn mask_counts_examples() {
        let v = abc();
        let doc = Document::new("d", "a a b", None);
        let full = vectorize(&doc, &v);
        assert_eq!(mask_counts(&doc, &full, &v), v.count_vector(&doc));
        assert!(mask_counts(&doc, &InterpretableVector::zeros(3), &v).is_zero());
        let keep_a = InterpretableVector::new(3, [0]);
        let masked = mask_counts(&doc, &keep_a, &v);
        assert_eq!(masked.get(0), 2.0);
        assert_eq!(masked.get(1), 0.0);
    }

    #[test]
    fn count_vector_ops() {
        let a = CountVector::from_entries([(3, 1.0), (1, 2.0), (3, 1.0), (5, 0.0)]);
        assert_eq!(a.entries(), &[(1, 2.0), (3, 2.0)]);
        let b = CountVector::from_dense(&[0.0, 1.0, 0.0, 3.0]);
        assert_eq!(a.dot(&b), 8.0);
        assert_eq!(a.without(&BTreeSet::from([1])).entries(), &[(3, 2.0)]);
        assert_eq!(b.to_dense(4), vec![0.0, 1.0, 0.0, 3.0]);
    }
}

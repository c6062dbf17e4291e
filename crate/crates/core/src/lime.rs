//! Local surrogate explanations.
//!
//! An instance is perturbed in its binary word-presence representation, the
//! black box is queried on each perturbation, and a sparse linear model is fit
//! to those answers with samples weighted by their proximity to the instance.
//! Feature selection follows the LASSO path (LARS) until `k` words are active,
//! then the chosen words are refit by weighted least squares.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{IncrementalCholesky, SymMatrix};
use crate::models::{predicted_class, ProbabilityModel};
use crate::textrepr::{
    cosine_distance, sample_perturbations, vectorize, CountVector, Document, InterpretableVector,
    PerturbedSample, Vocabulary,
};

/// Ridge added to the refit normal equations.
const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    #[default]
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub sigma: f64,
    #[serde(default)]
    pub distance: DistanceKind,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            sigma: 0.25,
            distance: DistanceKind::Cosine,
        }
    }
}

impl KernelConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        let cfg = KernelConfig {
            sigma,
            distance: DistanceKind::Cosine,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma > 0.0 && self.sigma.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("kernel width must be positive, got {}", self.sigma)))
        }
    }
}

/// `exp(-d² / σ²)`.
pub fn kernel_weight(distance: f64, cfg: &KernelConfig) -> Result<f64> {
    cfg.validate()?;
    if !(distance >= 0.0) {
        return Err(Error::Range(format!("distance must be non-negative, got {distance}")));
    }
    Ok((-(distance * distance) / (cfg.sigma * cfg.sigma)).exp())
}

/// Perturbed neighbourhood of one instance with black-box answers.
///
/// Labels are class-1 probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateDataset {
    pub xprime: InterpretableVector,
    pub rows: Vec<PerturbedSample>,
}

impl SurrogateDataset {
    /// The same samples with labels flipped to the probability of `class`.
    pub fn for_class(&self, class: u8) -> SurrogateDataset {
        let mut out = self.clone();
        if class == 0 {
            for r in &mut out.rows {
                r.label = 1.0 - r.label;
            }
        }
        out
    }
}

/// Samples `n` perturbations of `doc` and labels them with `f`.
pub fn build_surrogate(
    f: &dyn ProbabilityModel,
    doc: &Document,
    vocab: &Vocabulary,
    n: usize,
    cfg: &KernelConfig,
    seed: u64,
) -> Result<SurrogateDataset> {
    build_surrogate_excluding(f, doc, vocab, n, cfg, seed, &BTreeSet::new())
}

/// Like [`build_surrogate`], but the `excluded` columns are never perturbed.
///
/// Excluded words stay in every sample at their original counts and are
/// absent from the interpretable representation, so they can never be chosen.
pub fn build_surrogate_excluding(
    f: &dyn ProbabilityModel,
    doc: &Document,
    vocab: &Vocabulary,
    n: usize,
    cfg: &KernelConfig,
    seed: u64,
    excluded: &BTreeSet<usize>,
) -> Result<SurrogateDataset> {
    cfg.validate()?;
    let full = vectorize(doc, vocab);
    let xprime = InterpretableVector::new(
        full.dim(),
        full.support().iter().copied().filter(|j| !excluded.contains(j)),
    );
    let counts = vocab.count_vector(doc);
    let samples = sample_perturbations(&xprime, n, seed)?;
    let mut rows = Vec::with_capacity(samples.len());
    for z in samples {
        let x: CountVector = counts.retain(|j| z.contains(j) || excluded.contains(&j));
        let distance = cosine_distance(&xprime, &z)?;
        rows.push(PerturbedSample {
            label: f.predict_prob(&x),
            weight: kernel_weight(distance, cfg)?,
            distance,
            zprime: z,
        });
    }
    Ok(SurrogateDataset { xprime, rows })
}

/// Sparse weighted linear fit over the interpretable columns.
#[derive(Debug, Clone, PartialEq)]
pub struct KLassoFit {
    /// Global column ids in the order LARS activated them.
    pub features: Vec<usize>,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl KLassoFit {
    pub fn predict(&self, z: &InterpretableVector) -> f64 {
        self.intercept
            + self
                .features
                .iter()
                .zip(&self.weights)
                .filter(|(j, _)| z.contains(**j))
                .map(|(_, w)| w)
                .sum::<f64>()
    }
}

/// Centered, √π-scaled design over the active columns of `xprime`.
struct Design {
    columns: Vec<usize>,
    n: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn weighted_design(z: &SurrogateDataset) -> Result<Design> {
    let columns = z.xprime.support().to_vec();
    let p = columns.len();
    let n = z.rows.len();
    let total: f64 = z.rows.iter().map(|r| r.weight).sum();
    if !(total > 0.0) {
        return Err(Error::Config("sample weights sum to zero".into()));
    }
    let mut raw = vec![0.0; n * p];
    for (r, row) in z.rows.iter().enumerate() {
        for &j in row.zprime.support() {
            if let Ok(pos) = columns.binary_search(&j) {
                raw[r * p + pos] = 1.0;
            }
        }
    }
    let mut x_mean = vec![0.0; p];
    let mut y_mean = 0.0;
    for (r, row) in z.rows.iter().enumerate() {
        y_mean += row.weight * row.label;
        for (m, v) in x_mean.iter_mut().zip(&raw[r * p..(r + 1) * p]) {
            *m += row.weight * v;
        }
    }
    y_mean /= total;
    x_mean.iter_mut().for_each(|m| *m /= total);

    let mut y = Vec::with_capacity(n);
    for (r, row) in z.rows.iter().enumerate() {
        let s = row.weight.sqrt();
        y.push(s * (row.label - y_mean));
        for (v, m) in raw[r * p..(r + 1) * p].iter_mut().zip(&x_mean) {
            *v = s * (*v - m);
        }
    }
    Ok(Design {
        columns,
        n,
        x: raw,
        y,
        x_mean,
        y_mean,
    })
}

/// Active-set indices in LARS activation order, at most `k` of them.
fn lars_path(g: &SymMatrix, c: &[f64], k: usize, usable: &[bool]) -> Vec<usize> {
    let p = c.len();
    let mut usable = usable.to_vec();
    let mut beta = vec![0.0; p];
    let mut corr = c.to_vec();
    let mut active: Vec<usize> = Vec::new();

    let argmax = |corr: &[f64], usable: &[bool]| {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..p {
            if usable[j] && best.is_none_or(|(_, v)| corr[j].abs() > v) {
                best = Some((j, corr[j].abs()));
            }
        }
        best
    };
    let Some((first, c0)) = argmax(&corr, &usable) else {
        return active;
    };
    if c0 == 0.0 {
        return active;
    }
    let mut next = Some(first);
    let max_iter = 8 * p + 8;
    for _ in 0..max_iter {
        if let Some(j) = next.take() {
            let mut trial = active.clone();
            trial.push(j);
            if crate::linalg::cholesky(&g.submatrix(&trial), 1e-10).is_some() {
                active = trial;
            } else {
                log::warn!("LARS skipped column {j}: linearly dependent on the active set");
                usable[j] = false;
            }
        }
        if active.len() >= k || active.is_empty() {
            break;
        }

        let signs: Vec<f64> = active.iter().map(|&a| corr[a].signum()).collect();
        let Some(chol) = crate::linalg::cholesky(&g.submatrix(&active), 1e-10) else {
            break;
        };
        let w = chol.solve(&signs);
        let sw: f64 = signs.iter().zip(&w).map(|(s, w)| s * w).sum();
        if !(sw > 0.0) {
            break;
        }
        let aa = 1.0 / sw.sqrt();
        let d: Vec<f64> = w.iter().map(|v| aa * v).collect();
        let a: Vec<f64> = (0..p)
            .map(|j| active.iter().zip(&d).map(|(&i, di)| g.get(j, i) * di).sum())
            .collect();
        let big_c = active.iter().fold(0.0f64, |m, &i| m.max(corr[i].abs()));

        let full = big_c / aa;
        let eps = 1e-10 * full;
        let mut gamma = full;
        let mut join = None;
        for j in 0..p {
            if !usable[j] || active.contains(&j) {
                continue;
            }
            for cand in [(big_c - corr[j]) / (aa - a[j]), (big_c + corr[j]) / (aa + a[j])] {
                if cand > eps && cand < gamma {
                    gamma = cand;
                    join = Some(j);
                }
            }
        }
        let mut drop = None;
        for (pos, &i) in active.iter().enumerate() {
            if d[pos] != 0.0 {
                let cand = -beta[i] / d[pos];
                if cand > eps && cand < gamma {
                    gamma = cand;
                    drop = Some(pos);
                    join = None;
                }
            }
        }

        for (pos, &i) in active.iter().enumerate() {
            beta[i] += gamma * d[pos];
        }
        for j in 0..p {
            corr[j] -= gamma * a[j];
        }
        if let Some(pos) = drop {
            let i = active.remove(pos);
            beta[i] = 0.0;
        } else if join.is_none() {
            // least-squares fit on the active set reached: the path is exhausted
            break;
        } else {
            next = join;
        }
    }
    active
}

/// Weighted least squares with intercept on the design columns `cols`.
///
/// Columns dependent on earlier ones are dropped.
fn refit(g: &SymMatrix, c: &[f64], cols: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let mut chol = IncrementalCholesky::new(1e-9);
    let mut kept: Vec<usize> = Vec::new();
    for &j in cols {
        let cross: Vec<f64> = kept.iter().map(|&i| g.get(j, i)).collect();
        if chol.push(&cross, g.get(j, j) + RIDGE) {
            kept.push(j);
        } else {
            log::warn!("dropped design column {j} from the refit: linearly dependent");
        }
    }
    let rhs: Vec<f64> = kept.iter().map(|&j| c[j]).collect();
    let beta = if kept.is_empty() { Vec::new() } else { chol.solve(&rhs) };
    (kept, beta)
}

/// Selects at most `k` columns along the LASSO path and refits them.
pub fn k_lasso(z: &SurrogateDataset, k: usize) -> Result<KLassoFit> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if z.rows.len() <= k {
        return Err(Error::InsufficientSamples { n: z.rows.len(), k });
    }
    let design = weighted_design(z)?;
    let p = design.columns.len();
    let (g, c) = SymMatrix::gram(&design.x, design.n, p, &design.y);
    let total: f64 = z.rows.iter().map(|r| r.weight).sum();
    let usable: Vec<bool> = (0..p).map(|j| g.get(j, j) > 1e-12 * total).collect();

    // labels constant up to rounding: nothing to explain
    let spread: f64 = design.y.iter().map(|v| v * v).sum();
    let magnitude: f64 = z.rows.iter().map(|r| r.weight * r.label * r.label).sum();
    let path = if spread <= 1e-24 * magnitude {
        Vec::new()
    } else {
        lars_path(&g, &c, k, &usable)
    };
    let (kept, beta) = refit(&g, &c, &path);
    let intercept = design.y_mean
        - kept
            .iter()
            .zip(&beta)
            .map(|(&j, b)| b * design.x_mean[j])
            .sum::<f64>();
    Ok(KLassoFit {
        features: kept.iter().map(|&j| design.columns[j]).collect(),
        weights: beta,
        intercept,
    })
}

/// Weighted R² of `fit` on `z`; 1 when the labels have no weighted variance.
pub fn fidelity(z: &SurrogateDataset, fit: &KLassoFit) -> f64 {
    let total: f64 = z.rows.iter().map(|r| r.weight).sum();
    let mean = z.rows.iter().map(|r| r.weight * r.label).sum::<f64>() / total;
    let (mut sse, mut sst) = (0.0, 0.0);
    for r in &z.rows {
        let e = r.label - fit.predict(&r.zprime);
        sse += r.weight * e * e;
        sst += r.weight * (r.label - mean).powi(2);
    }
    if sst <= 1e-24 * total {
        1.0
    } else {
        (1.0 - sse / sst).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub k: usize,
    pub n_samples: usize,
    pub kernel: KernelConfig,
    pub seed: u64,
    /// Class to explain; the model's predicted class when `None`.
    pub target_class: Option<u8>,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            k: 10,
            n_samples: 5000,
            kernel: KernelConfig::default(),
            seed: 0,
            target_class: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationFeature {
    pub token: String,
    pub column: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationConfig {
    pub k: usize,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub distance: DistanceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub instance_id: String,
    pub target_class: u8,
    pub intercept: f64,
    pub fidelity: f64,
    /// Sorted by decreasing `|weight|`, then column.
    pub features: Vec<ExplanationFeature>,
    pub config: ExplanationConfig,
}

impl Explanation {
    pub fn columns(&self) -> BTreeSet<usize> {
        self.features.iter().map(|f| f.column).collect()
    }

    /// Surrogate output at the explained instance with `removed` columns zeroed.
    pub fn surrogate_value(&self, removed: &BTreeSet<usize>) -> f64 {
        self.intercept
            + self
                .features
                .iter()
                .filter(|f| !removed.contains(&f.column))
                .map(|f| f.weight)
                .sum::<f64>()
    }
}

pub fn explain_instance(
    f: &dyn ProbabilityModel,
    doc: &Document,
    vocab: &Vocabulary,
    cfg: &LimeConfig,
) -> Result<Explanation> {
    explain_instance_excluding(f, doc, vocab, cfg, &BTreeSet::new())
}

/// Explains `doc` without ever perturbing or reporting the `excluded` columns.
pub fn explain_instance_excluding(
    f: &dyn ProbabilityModel,
    doc: &Document,
    vocab: &Vocabulary,
    cfg: &LimeConfig,
    excluded: &BTreeSet<usize>,
) -> Result<Explanation> {
    if cfg.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let z = build_surrogate_excluding(f, doc, vocab, cfg.n_samples, &cfg.kernel, cfg.seed, excluded)?;
    let target = match cfg.target_class {
        Some(c) if c > 1 => return Err(Error::Range(format!("class {c} is not 0 or 1"))),
        Some(c) => c,
        None => predicted_class(z.rows[0].label),
    };
    let z = z.for_class(target);
    let fit = k_lasso(&z, cfg.k)?;
    let fidelity = fidelity(&z, &fit);
    let mut features: Vec<ExplanationFeature> = fit
        .features
        .iter()
        .zip(&fit.weights)
        .map(|(&column, &weight)| ExplanationFeature {
            token: vocab.token(column).unwrap_or_default().to_string(),
            column,
            weight,
        })
        .collect();
    features.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()).then(a.column.cmp(&b.column)));
    Ok(Explanation {
        instance_id: doc.id.clone(),
        target_class: target,
        intercept: fit.intercept,
        fidelity,
        features,
        config: ExplanationConfig {
            k: cfg.k,
            n: cfg.n_samples,
            sigma: cfg.kernel.sigma,
            seed: cfg.seed,
            distance: cfg.kernel.distance,
        },
    })
}

/// Removes, one at a time, the word whose removal most lowers the predicted
/// class's probability, until the class flips or `k` words are gone.
///
/// Returns columns in removal order.
pub fn greedy_explain(f: &dyn ProbabilityModel, doc: &Document, vocab: &Vocabulary, k: usize) -> Vec<usize> {
    let mut x = vocab.count_vector(doc);
    let p0 = f.predict_prob(&x);
    let class = predicted_class(p0);
    let class_prob = |p: f64| if class == 1 { p } else { 1.0 - p };
    let mut out = Vec::new();
    while out.len() < k && !x.is_zero() {
        let mut best: Option<(usize, f64, CountVector)> = None;
        for &(j, _) in x.entries() {
            let trial = x.retain(|c| c != j);
            let p = class_prob(f.predict_prob(&trial));
            if best.as_ref().is_none_or(|b| p < b.1) {
                best = Some((j, p, trial));
            }
        }
        let (j, _, trial) = best.expect("non-empty vector");
        out.push(j);
        x = trial;
        if predicted_class(f.predict_prob(&x)) != class {
            break;
        }
    }
    out
}

/// `min(k, m)` of the document's `m` words, uniformly without replacement.
pub fn random_explain(doc: &Document, vocab: &Vocabulary, k: usize, seed: u64) -> Vec<usize> {
    let xprime = vectorize(doc, vocab);
    let m = xprime.nnz();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, m, k.min(m))
        .into_iter()
        .map(|p| xprime.support()[p])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FnModel;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::from_tokens((0..n).map(|i| format!("t{i}")))
    }

    fn doc_all(n: usize) -> Document {
        let text: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        Document::new("d", text.join(" "), None)
    }

    /// Surrogate over `d` columns with labels `f(z)` and LIME sampling.
    fn planted(d: usize, n: usize, seed: u64, f: impl Fn(&InterpretableVector) -> f64) -> SurrogateDataset {
        let xprime = InterpretableVector::new(d, 0..d);
        let cfg = KernelConfig::default();
        let rows = sample_perturbations(&xprime, n, seed)
            .unwrap()
            .into_iter()
            .map(|z| {
                let distance = cosine_distance(&xprime, &z).unwrap();
                PerturbedSample {
                    label: f(&z),
                    weight: kernel_weight(distance, &cfg).unwrap(),
                    distance,
                    zprime: z,
                }
            })
            .collect();
        SurrogateDataset { xprime, rows }
    }

    #[test]
    fn kernel_values() {
        let cfg = KernelConfig::default();
        assert_eq!(kernel_weight(0.0, &cfg).unwrap(), 1.0);
        assert!((kernel_weight(0.25, &cfg).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((kernel_weight(0.5, &cfg).unwrap() - (-4.0f64).exp()).abs() < 1e-15);
        assert!(KernelConfig::new(0.0).is_err());
        assert!(kernel_weight(-0.1, &cfg).is_err());
    }

    #[test]
    fn two_feature_plant() {
        let z = planted(5, 2000, 3, |z| 2.0 * z.contains(1) as u8 as f64 - 3.0 * z.contains(2) as u8 as f64);
        let fit = k_lasso(&z, 2).unwrap();
        let mut got: Vec<(usize, f64)> = fit.features.iter().copied().zip(fit.weights.iter().copied()).collect();
        got.sort_by_key(|g| g.0);
        assert_eq!(got.iter().map(|g| g.0).collect::<Vec<_>>(), vec![1, 2]);
        assert!((got[0].1 - 2.0).abs() < 1e-6);
        assert!((got[1].1 + 3.0).abs() < 1e-6);
        assert!(fit.intercept.abs() < 1e-6);
    }

    #[test]
    fn constant_labels_select_nothing() {
        let z = planted(6, 300, 1, |_| 0.7);
        let fit = k_lasso(&z, 3).unwrap();
        assert!(fit.features.is_empty());
        assert!((fit.intercept - 0.7).abs() < 1e-12);
        assert_eq!(fidelity(&z, &fit), 1.0);
    }

    #[test]
    fn too_few_samples() {
        let z = planted(6, 3, 1, |_| 0.7);
        assert!(matches!(k_lasso(&z, 3), Err(Error::InsufficientSamples { n: 3, k: 3 })));
    }

    #[test]
    fn anchor_row_and_constant_model() {
        let v = vocab(8);
        let doc = doc_all(8);
        let f = FnModel::new(8, "const", |_| 0.7);
        let z = build_surrogate(&f, &doc, &v, 50, &KernelConfig::default(), 4).unwrap();
        assert_eq!(z.rows.len(), 50);
        assert_eq!(z.rows[0].weight, 1.0);
        assert_eq!(z.rows[0].distance, 0.0);
        assert!(z.rows.iter().all(|r| r.label == 0.7 && r.weight > 0.0 && r.weight <= 1.0));

        let e = explain_instance(&f, &doc, &v, &LimeConfig { n_samples: 200, ..Default::default() }).unwrap();
        assert!(e.features.iter().all(|f| f.weight.abs() < 1e-12));
        assert_eq!(e.fidelity, 1.0);
    }

    #[test]
    fn target_zero_flips_labels() {
        let v = vocab(4);
        let doc = doc_all(4);
        let f = FnModel::new(4, "lin", |x: &CountVector| 0.2 + 0.1 * x.get(0));
        let cfg = LimeConfig { n_samples: 300, k: 2, ..Default::default() };
        let e = explain_instance(&f, &doc, &v, &cfg).unwrap();
        assert_eq!(e.target_class, 0);
        // class-0 probability falls by 0.1 with t0 present
        let w0 = e.features.iter().find(|f| f.column == 0).unwrap().weight;
        assert!((w0 + 0.1).abs() < 1e-8);
    }

    #[test]
    fn excluded_columns_never_reported() {
        let v = vocab(6);
        let doc = doc_all(6);
        let f = FnModel::new(6, "lin", |x: &CountVector| 0.1 + 0.15 * x.get(1) + 0.1 * x.get(3));
        let cfg = LimeConfig { n_samples: 300, k: 6, ..Default::default() };
        let e = explain_instance_excluding(&f, &doc, &v, &cfg, &BTreeSet::from([1])).unwrap();
        assert!(!e.columns().contains(&1));
        assert!(e.columns().contains(&3));
    }

    #[test]
    fn greedy_single_decisive_token() {
        let v = vocab(5);
        let doc = doc_all(5);
        let f = FnModel::new(5, "rule", |x: &CountVector| if x.get(2) > 0.0 { 0.9 } else { 0.1 });
        assert_eq!(greedy_explain(&f, &doc, &v, 10), vec![2]);
    }

    #[test]
    fn greedy_constant_model_removes_in_id_order() {
        let v = vocab(5);
        let doc = doc_all(5);
        let f = FnModel::new(5, "const", |_| 0.8);
        assert_eq!(greedy_explain(&f, &doc, &v, 3), vec![0, 1, 2]);
        assert_eq!(greedy_explain(&f, &doc, &v, 10).len(), 5);
    }

    #[test]
    fn random_explain_properties() {
        let v = vocab(20);
        let doc = Document::new("d", "t1 t3 t5 t7", None);
        let mut all = random_explain(&doc, &v, 10, 1);
        all.sort_unstable();
        assert_eq!(all, vec![1, 3, 5, 7]);
        let doc = doc_all(20);
        let a = random_explain(&doc, &v, 5, 9);
        assert_eq!(a, random_explain(&doc, &v, 5, 9));
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|&j| j < 20));
    }
}

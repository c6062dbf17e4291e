use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::TrainingSet;
use crate::textrepr::CountVector;

/// k-nearest neighbours under cosine distance on word counts.
///
/// The probability of class 1 is the fraction of the `k` nearest training
/// documents labelled 1. Distance ties go to the lower training index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub rows: Vec<CountVector>,
    pub labels: Vec<u8>,
    #[serde(skip)]
    index: OnceLock<Index>,
}

#[derive(Debug, Clone)]
struct Index {
    norms: Vec<f64>,
    /// `postings[j]` lists `(row, count)` for rows containing column `j`.
    postings: Vec<Vec<(usize, f64)>>,
}

impl PartialEq for KnnModel {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.rows == other.rows && self.labels == other.labels
    }
}

impl KnnModel {
    pub fn fit(data: &TrainingSet, k: usize) -> KnnModel {
        KnnModel {
            k: k.min(data.len()).max(1),
            rows: data.rows.clone(),
            labels: data.labels.clone(),
            index: OnceLock::new(),
        }
    }

    fn index(&self) -> &Index {
        self.index.get_or_init(|| {
            let dim = self
                .rows
                .iter()
                .filter_map(|r| r.entries().last().map(|e| e.0 + 1))
                .max()
                .unwrap_or(0);
            let mut postings = vec![Vec::new(); dim];
            for (i, r) in self.rows.iter().enumerate() {
                for &(j, v) in r.entries() {
                    postings[j].push((i, v));
                }
            }
            Index {
                norms: self.rows.iter().map(CountVector::norm).collect(),
                postings,
            }
        })
    }

    /// Indices of the nearest training rows, closest first.
    pub fn neighbours(&self, x: &CountVector) -> Vec<usize> {
        let index = self.index();
        let mut dots = vec![0.0; self.rows.len()];
        for &(j, v) in x.entries() {
            if let Some(list) = index.postings.get(j) {
                for &(i, c) in list {
                    dots[i] += v * c;
                }
            }
        }
        let xn = x.norm();
        let dist = |i: usize| {
            let denom = xn * index.norms[i];
            if denom > 0.0 {
                (1.0 - dots[i] / denom).max(0.0)
            } else {
                1.0
            }
        };
        let mut order: Vec<(f64, usize)> = (0..self.rows.len()).map(|i| (dist(i), i)).collect();
        let k = self.k.min(order.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < order.len() {
            order.select_nth_unstable_by(k, cmp);
            order.truncate(k);
        }
        order.sort_by(cmp);
        order.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_prob(&self, x: &CountVector) -> f64 {
        let nb = self.neighbours(x);
        if nb.is_empty() {
            return 0.5;
        }
        nb.iter().filter(|&&i| self.labels[i] == 1).count() as f64 / nb.len() as f64
    }
}

//! Choosing a small, diverse set of explanations to show a user.
//!
//! Each explanation becomes a row of absolute weights. A word's global
//! importance grows with how many instances it explains, and a set of rows
//! covers the importance of every word it touches. Rows are picked greedily by
//! marginal coverage, which is within `1 - 1/e` of the best possible set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lime::Explanation;

/// Largest row count [`brute_force_pick`] will enumerate.
pub const BRUTE_FORCE_MAX_ROWS: usize = 15;

/// Sparse non-negative `n × d` matrix of absolute explanation weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMatrix {
    pub dim: usize,
    /// Row `i` lists `(column, |weight|)` with positive weights, sorted by column.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub instance_ids: Vec<String>,
    /// `I_j = sqrt(sum_i W_ij)`.
    pub importance: Vec<f64>,
}

impl ExplanationMatrix {
    /// Builds the matrix from dense rows; negative entries are made absolute.
    pub fn from_dense(dense: &[Vec<f64>], dim: usize) -> Result<Self> {
        let mut rows = Vec::with_capacity(dense.len());
        for r in dense {
            if r.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: r.len(),
                });
            }
            rows.push(
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, v.abs()))
                    .collect(),
            );
        }
        let ids = (0..dense.len()).map(|i| i.to_string()).collect();
        Ok(Self::from_sparse(rows, ids, dim))
    }

    fn from_sparse(rows: Vec<Vec<(usize, f64)>>, instance_ids: Vec<String>, dim: usize) -> Self {
        let mut sums = vec![0.0; dim];
        for row in &rows {
            for &(j, v) in row {
                sums[j] += v;
            }
        }
        ExplanationMatrix {
            dim,
            rows,
            instance_ids,
            importance: sums.into_iter().map(f64::sqrt).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map_or(0.0, |p| self.rows[i][p].1)
    }
}

/// `W_ij = |w|` for each word `j` in explanation `i`.
pub fn build_matrix(explanations: &[Explanation], dim: usize) -> Result<ExplanationMatrix> {
    let mut rows = Vec::with_capacity(explanations.len());
    for e in explanations {
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(e.features.len());
        for f in &e.features {
            if f.column >= dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: f.column + 1,
                });
            }
            if f.weight != 0.0 {
                row.push((f.column, f.weight.abs()));
            }
        }
        row.sort_by_key(|e| e.0);
        rows.push(row);
    }
    let ids = explanations.iter().map(|e| e.instance_id.clone()).collect();
    Ok(ExplanationMatrix::from_sparse(rows, ids, dim))
}

/// Total importance of the columns touched by at least one row of `selected`.
pub fn coverage(selected: &[usize], w: &ExplanationMatrix) -> f64 {
    let mut covered = vec![false; w.dim];
    for &i in selected {
        for &(j, v) in &w.rows[i] {
            if v > 0.0 {
                covered[j] = true;
            }
        }
    }
    covered
        .iter()
        .zip(&w.importance)
        .filter(|(c, _)| **c)
        .map(|(_, imp)| imp)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickResult {
    /// Row indices in the order they were picked.
    pub selected: Vec<usize>,
    /// Coverage after each pick.
    pub coverage_trace: Vec<f64>,
}

/// Greedy coverage maximisation with budget `budget`.
///
/// Ties go to the lowest row index. Once no row adds coverage the budget is
/// filled with the remaining rows in index order.
pub fn submodular_pick(w: &ExplanationMatrix, budget: usize) -> Result<PickResult> {
    if budget == 0 {
        return Err(Error::Config("budget must be at least 1".into()));
    }
    let n = w.n_rows();
    let target = budget.min(n);
    let mut covered = vec![false; w.dim];
    let mut taken = vec![false; n];
    let mut total = 0.0;
    let mut result = PickResult {
        selected: Vec::with_capacity(target),
        coverage_trace: Vec::with_capacity(target),
    };
    while result.selected.len() < target {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let gain: f64 = w.rows[i]
                .iter()
                .filter(|(j, v)| *v > 0.0 && !covered[*j])
                .map(|(j, _)| w.importance[*j])
                .sum();
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let (i, gain) = best.expect("budget bounded by row count");
        taken[i] = true;
        for &(j, v) in &w.rows[i] {
            if v > 0.0 {
                covered[j] = true;
            }
        }
        total += gain;
        result.selected.push(i);
        result.coverage_trace.push(total);
    }
    Ok(result)
}

/// Best subset of at most `budget` rows, found by enumeration.
///
/// Among equal values the first subset in enumeration order wins.
pub fn brute_force_pick(w: &ExplanationMatrix, budget: usize) -> Result<(Vec<usize>, f64)> {
    let n = w.n_rows();
    if n > BRUTE_FORCE_MAX_ROWS {
        return Err(Error::Size {
            n,
            max: BRUTE_FORCE_MAX_ROWS,
        });
    }
    let mut best = (Vec::new(), 0.0);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize > budget {
            continue;
        }
        let set: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let value = coverage(&set, w);
        if value > best.1 + 1e-12 {
            best = (set, value);
        }
    }
    Ok(best)
}

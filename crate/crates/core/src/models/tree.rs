use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainingSet;
use crate::textrepr::CountVector;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    /// Distinct split features allowed on any root-to-leaf path.
    pub max_active_features: Option<usize>,
    /// Non-constant features examined per split; `None` examines all.
    pub max_features: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        samples: usize,
    },
}

/// CART classification tree on count features, Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

struct Builder<'a> {
    data: &'a TrainingSet,
    params: &'a TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    scratch: Vec<Occupancy>,
    touched: Vec<usize>,
}

#[derive(Clone, Copy, Default)]
struct Occupancy {
    count: usize,
    first: f64,
    same: bool,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Gini impurity times node size: `2 p (n - p) / n`.
fn weighted_gini(n: f64, pos: f64) -> f64 {
    if n <= 0.0 {
        0.0
    } else {
        2.0 * pos * (n - pos) / n
    }
}

impl Tree {
    /// Fits on the rows listed in `idx` (repeats allowed, as in a bootstrap).
    pub fn fit(data: &TrainingSet, idx: &[usize], params: &TreeParams, seed: u64) -> Tree {
        let mut b = Builder {
            data,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes: Vec::new(),
            scratch: vec![Occupancy::default(); data.dim],
            touched: Vec::new(),
        };
        b.grow(idx.to_vec(), 0, &BTreeSet::new());
        Tree { nodes: b.nodes }
    }

    fn leaf_of(&self, x: &CountVector) -> (usize, Vec<usize>) {
        let mut at = 0;
        let mut path = Vec::new();
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { .. } => return (at, path),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    path.push(feature);
                    at = if x.get(feature) <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &CountVector) -> f64 {
        match self.nodes[self.leaf_of(x).0] {
            TreeNode::Leaf { value, .. } => value,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn decision_path_features(&self, x: &CountVector) -> BTreeSet<usize> {
        self.leaf_of(x).1.into_iter().collect()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Largest number of distinct split features on any root-to-leaf path.
    pub fn max_path_features(&self) -> usize {
        fn go(nodes: &[TreeNode], at: usize, seen: &mut Vec<usize>) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => {
                    let mut s = seen.clone();
                    s.sort_unstable();
                    s.dedup();
                    s.len()
                }
                TreeNode::Split {
                    feature, left, right, ..
                } => {
                    seen.push(feature);
                    let m = go(nodes, left, seen).max(go(nodes, right, seen));
                    seen.pop();
                    m
                }
            }
        }
        go(&self.nodes, 0, &mut Vec::new())
    }
}

impl<'a> Builder<'a> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize, path: &BTreeSet<usize>) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.data.labels[i] == 1).count();
        let at = self.nodes.len();
        let value = if n == 0 { 0.0 } else { pos as f64 / n as f64 };
        self.nodes.push(TreeNode::Leaf { value, samples: n });

        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if pos == 0 || pos == n || n < 2 || !depth_ok {
            return at;
        }
        let Some(best) = self.best_split(&idx, pos, path) else {
            return at;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.data.rows[i].get(best.feature) <= best.threshold);
        let mut child_path = path.clone();
        child_path.insert(best.feature);
        let left = self.grow(left_idx, depth + 1, &child_path);
        let right = self.grow(right_idx, depth + 1, &child_path);
        self.nodes[at] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        at
    }

    fn best_split(&mut self, idx: &[usize], pos: usize, path: &BTreeSet<usize>) -> Option<BestSplit> {
        let n = idx.len();
        let restricted = self
            .params
            .max_active_features
            .is_some_and(|m| path.len() >= m);

        // per-feature occupancy in this node, to find non-constant candidates
        for &i in idx {
            for &(j, v) in self.data.rows[i].entries() {
                let s = &mut self.scratch[j];
                if s.count == 0 {
                    self.touched.push(j);
                    s.first = v;
                    s.same = true;
                } else if v != s.first {
                    s.same = false;
                }
                s.count += 1;
            }
        }
        self.touched.sort_unstable();
        let mut candidates: Vec<usize> = self
            .touched
            .iter()
            .copied()
            .filter(|&j| {
                let s = &self.scratch[j];
                let constant = s.count == n && s.same;
                !constant && (!restricted || path.contains(&j))
            })
            .collect();
        for &j in &self.touched {
            self.scratch[j] = Occupancy::default();
        }
        self.touched.clear();
        if let Some(m) = self.params.max_features {
            candidates.shuffle(&mut self.rng);
            candidates.truncate(m.max(1));
            candidates.sort_unstable();
        }
        for &j in &candidates {
            self.scratch[j].count = 1;
        }

        // (feature, value, label) for every non-zero candidate cell
        let mut cells: Vec<(usize, f64, u8)> = Vec::new();
        for &i in idx {
            let y = self.data.labels[i];
            cells.extend(
                self.data.rows[i]
                    .entries()
                    .iter()
                    .filter(|(j, _)| self.scratch[*j].count == 1)
                    .map(|&(j, v)| (j, v, y)),
            );
        }
        for &j in &candidates {
            self.scratch[j].count = 0;
        }
        cells.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

        let mut groups: Vec<(usize, usize, usize)> = Vec::with_capacity(candidates.len()); // (feature, start, end)
        let mut s = 0;
        while s < cells.len() {
            let f = cells[s].0;
            let mut e = s;
            while e < cells.len() && cells[e].0 == f {
                e += 1;
            }
            groups.push((f, s, e));
            s = e;
        }

        let parent = weighted_gini(n as f64, pos as f64);
        let mut best: Option<BestSplit> = None;
        for &(feature, start, end) in &groups {
            let group = &cells[start..end];
            let nz_pos = group.iter().filter(|c| c.2 == 1).count();
            // left side starts with the implicit zeros
            let mut left_n = n - group.len();
            let mut left_pos = pos - nz_pos;
            let mut prev = 0.0;
            let mut k = 0;
            while k < group.len() {
                let v = group[k].1;
                if left_n > 0 && v > prev {
                    let right_n = n - left_n;
                    let imp = weighted_gini(left_n as f64, left_pos as f64)
                        + weighted_gini(right_n as f64, (pos - left_pos) as f64);
                    if best.as_ref().is_none_or(|b| imp < b.impurity - 1e-12) {
                        best = Some(BestSplit {
                            feature,
                            threshold: (prev + v) / 2.0,
                            impurity: imp,
                        });
                    }
                }
                while k < group.len() && group[k].1 == v {
                    left_n += 1;
                    left_pos += (group[k].2 == 1) as usize;
                    k += 1;
                }
                prev = v;
            }
        }
        best.filter(|b| b.impurity < parent - 1e-12)
    }
}

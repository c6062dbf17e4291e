use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};
use super::TrainingSet;
use crate::seed::derive_seed;
use crate::textrepr::CountVector;

/// Bagged CART trees with `floor(sqrt(d))` candidate features per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(data: &TrainingSet, n_trees: usize, max_depth: Option<usize>, seed: u64) -> Forest {
        let params = TreeParams {
            max_depth,
            max_active_features: None,
            max_features: Some(((data.dim as f64).sqrt().floor() as usize).max(1)),
        };
        Forest::fit_with(data, n_trees, &params, seed)
    }

    /// Like [`Forest::fit`] with explicit per-tree parameters.
    pub fn fit_with(data: &TrainingSet, n_trees: usize, params: &TreeParams, seed: u64) -> Forest {
        let n = data.len();
        let trees = (0..n_trees)
            .map(|t| {
                let tree_seed = derive_seed(seed, t as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                Tree::fit(data, &idx, params, rng.gen())
            })
            .collect();
        Forest { trees }
    }

    /// Mean of the trees' leaf class-1 fractions.
    pub fn predict(&self, x: &CountVector) -> f64 {
        if self.trees.is_empty() {
            return 0.5;
        }
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let rows: Vec<CountVector> = (0..40)
            .map(|i| CountVector::from_entries([(i % 4, 1.0), (4 + i % 3, 1.0)]))
            .collect();
        let labels = (0..40).map(|i| (i % 4 < 2) as u8).collect();
        let data = TrainingSet { rows, labels, dim: 7 };
        let a = Forest::fit(&data, 5, None, 9);
        let b = Forest::fit(&data, 5, None, 9);
        assert_eq!(a, b);
        for x in &data.rows {
            let p = a.predict(x);
            assert!((0.0..=1.0).contains(&p));
        }
        assert_ne!(a, Forest::fit(&data, 5, None, 10));
    }
}

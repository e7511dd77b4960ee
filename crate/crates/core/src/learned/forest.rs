//! Bagged random forest over CART trees.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, DecisionTreeModel, TreeParams};
use super::{argmax_first, Sample, N_CLASSES};
use crate::classifier::FeatureVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<DecisionTreeModel>,
    pub n_trees: usize,
    pub features_per_split: usize,
    pub seed: u64,
}

/// floor(sqrt(feature count)).
pub fn default_features_per_split() -> usize {
    (FeatureVector::LEN as f64).sqrt().floor() as usize
}

impl RandomForestModel {
    /// Majority vote; ties go to the earlier class.
    pub fn predict_index(&self, x: &[f64; FeatureVector::LEN]) -> usize {
        let mut votes = [0usize; N_CLASSES];
        for tree in &self.trees {
            votes[tree.predict_index(x)] += 1;
        }
        argmax_first(&votes)
    }
}

pub(crate) fn fit_forest(
    samples: &[Sample],
    n_trees: usize,
    features_per_split: usize,
    max_depth: usize,
    min_samples_split: usize,
    seed: u64,
) -> Result<RandomForestModel> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n_trees == 0 {
        return Err(Error::Config("n_trees must be >= 1".into()));
    }
    if features_per_split == 0 || features_per_split > FeatureVector::LEN {
        return Err(Error::Config(format!(
            "features_per_split must be in 1..={}",
            FeatureVector::LEN
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let params = TreeParams {
        max_depth,
        min_samples_split,
        features_per_split: Some(features_per_split),
    };
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let tree_seed = rng.next_u64();
        trees.push(fit_tree(samples, bootstrap, params, tree_seed)?);
    }
    Ok(RandomForestModel {
        trees,
        n_trees,
        features_per_split,
        seed,
    })
}

//! CART classification tree with Gini impurity.

use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_first, Sample, N_CLASSES};
use crate::classifier::FeatureVector;
use crate::error::{Error, Result};

const N_FEATURES: usize = FeatureVector::LEN;
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature_index: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class_counts: [usize; N_CLASSES],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl DecisionTreeModel {
    pub fn predict_index(&self, x: &[f64; N_FEATURES]) -> usize {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature_index] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                TreeNode::Leaf { class_counts } => return argmax_first(class_counts),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features examined per split; `None` means all.
    pub features_per_split: Option<usize>,
}

pub(crate) fn gini(counts: &[usize; N_CLASSES], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

fn class_counts(samples: &[Sample], idx: &[usize]) -> [usize; N_CLASSES] {
    let mut counts = [0; N_CLASSES];
    for &i in idx {
        counts[samples[i].label] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Best split of `idx`, minimizing weighted child Gini. Equal-impurity
/// candidates are resolved with `rng`.
fn best_split(
    samples: &[Sample],
    idx: &[usize],
    features: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<Candidate> {
    let n = idx.len();
    let total = class_counts(samples, idx);
    let mut best = f64::INFINITY;
    let mut ties: Vec<Candidate> = Vec::new();
    let mut order = idx.to_vec();

    for &f in features {
        order.sort_by(|&a, &b| samples[a].x[f].total_cmp(&samples[b].x[f]));
        let mut left = [0usize; N_CLASSES];
        for pos in 0..n - 1 {
            left[samples[order[pos]].label] += 1;
            let v = samples[order[pos]].x[f];
            let next = samples[order[pos + 1]].x[f];
            if v == next {
                continue;
            }
            let n_left = pos + 1;
            let n_right = n - n_left;
            let mut right = total;
            for k in 0..N_CLASSES {
                right[k] -= left[k];
            }
            let impurity = (n_left as f64 * gini(&left, n_left)
                + n_right as f64 * gini(&right, n_right))
                / n as f64;
            let cand = Candidate {
                feature: f,
                threshold: 0.5 * (v + next),
                impurity,
            };
            if impurity < best - EPS {
                best = impurity;
                ties.clear();
                ties.push(cand);
            } else if (impurity - best).abs() <= EPS {
                ties.push(cand);
            }
        }
    }
    match ties.len() {
        0 => None,
        1 => Some(ties[0]),
        k => Some(ties[rng.gen_range(0..k)]),
    }
}

struct Builder<'a> {
    samples: &'a [Sample],
    params: TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = class_counts(self.samples, &idx);
        let n = idx.len();
        let parent = gini(&counts, n);
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            class_counts: counts,
        });

        if depth >= self.params.max_depth || n < self.params.min_samples_split || parent <= EPS {
            return slot;
        }
        let features: Vec<usize> = match self.params.features_per_split {
            Some(k) if k < N_FEATURES => {
                let mut f = index::sample(&mut self.rng, N_FEATURES, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..N_FEATURES).collect(),
        };
        let Some(split) = best_split(self.samples, &idx, &features, &mut self.rng) else {
            return slot;
        };
        if split.impurity >= parent - EPS {
            return slot;
        }

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.samples[i].x[split.feature] <= split.threshold);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[slot] = TreeNode::Split {
            feature_index: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        slot
    }
}

pub(crate) fn fit_tree(
    samples: &[Sample],
    idx: Vec<usize>,
    params: TreeParams,
    seed: u64,
) -> Result<DecisionTreeModel> {
    if idx.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut b = Builder {
        samples,
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
    };
    b.grow(idx, 0);
    Ok(DecisionTreeModel {
        nodes: b.nodes,
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[4, 0, 0, 0, 0], 4), 0.0);
        assert!((gini(&[2, 2, 0, 0, 0], 4) - 0.5).abs() < 1e-15);
        assert!((gini(&[1, 1, 1, 1, 1], 5) - 0.8).abs() < 1e-15);
    }

    fn s(v: f64, label: usize) -> Sample {
        let mut x = [0.0; N_FEATURES];
        x[3] = v;
        Sample { x, label }
    }

    #[test]
    fn midpoint_threshold() {
        let samples = vec![s(0.0, 0), s(0.0, 0), s(1.0, 2), s(1.0, 2)];
        let params = TreeParams {
            max_depth: 4,
            min_samples_split: 2,
            features_per_split: None,
        };
        let tree = fit_tree(&samples, (0..4).collect(), params, 0).unwrap();
        assert_eq!(tree.depth(), 1);
        match tree.nodes[0] {
            TreeNode::Split {
                feature_index,
                threshold,
                ..
            } => {
                assert_eq!(feature_index, 3);
                assert_eq!(threshold, 0.5);
            }
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn depth_limit_respected() {
        let samples: Vec<Sample> = (0..64).map(|i| s(i as f64, i % N_CLASSES)).collect();
        for d in 0..5 {
            let params = TreeParams {
                max_depth: d,
                min_samples_split: 2,
                features_per_split: None,
            };
            let tree = fit_tree(&samples, (0..64).collect(), params, 1).unwrap();
            assert!(tree.depth() <= d);
        }
    }
}

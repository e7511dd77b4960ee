//! Learned routing baselines: an oracle-labeled dataset plus decision tree,
//! random forest and multinomial logistic regression classifiers.

pub mod forest;
pub mod logistic;
pub mod tree;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use forest::{default_features_per_split, RandomForestModel};
pub use logistic::LogisticModel;
pub use tree::{DecisionTreeModel, TreeNode};

use crate::classifier::{extract_features, ClassifierConfig, FeatureVector};
use crate::domain::{InferenceMode, RequestDescriptor, WorkloadFamily};
use crate::error::{Error, Result};
use crate::profile::ProfileTable;
use crate::routing::{
    route_oracle, ConstraintSet, DecisionReason, RoutingDecision, RoutingPolicy, RulePolicy,
};

pub const N_CLASSES: usize = 5;

/// Oracle classes in tie-breaking order.
pub const CLASSES: [InferenceMode; N_CLASSES] = [
    InferenceMode::FP16,
    InferenceMode::INT8,
    InferenceMode::GPTQ4,
    InferenceMode::SpeculativeDecoding,
    InferenceMode::GPTQPlusPrefixCaching,
];

pub fn class_index(mode: InferenceMode) -> Option<usize> {
    CLASSES.iter().position(|m| *m == mode)
}

pub(crate) fn argmax_first(counts: &[usize; N_CLASSES]) -> usize {
    let mut best = 0;
    for k in 1..N_CLASSES {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub x: [f64; FeatureVector::LEN],
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRow {
    pub features: FeatureVector,
    pub label: InferenceMode,
    pub family: WorkloadFamily,
}

fn samples(rows: &[DatasetRow]) -> Result<Vec<Sample>> {
    rows.iter()
        .map(|r| {
            let label = class_index(r.label).ok_or_else(|| {
                Error::Domain(format!("label {} is not an oracle class", r.label))
            })?;
            Ok(Sample {
                x: r.features.to_array(),
                label,
            })
        })
        .collect()
}

/// One row per request, labeled by the oracle over the five classes.
pub fn build_dataset(
    trace: &[RequestDescriptor],
    table: &ProfileTable,
    constraints: &ConstraintSet,
) -> Result<Vec<DatasetRow>> {
    trace
        .iter()
        .map(|req| {
            let family = req
                .workload_tag
                .ok_or_else(|| Error::UntaggedRequest(req.request_id.clone()))?;
            let decision = route_oracle(req, family, table, constraints, &CLASSES)?;
            Ok(DatasetRow {
                features: extract_features(req),
                label: decision.mode,
                family,
            })
        })
        .collect()
}

/// Rows labeled by the rule controller instead of the oracle.
pub fn build_rule_dataset(
    trace: &[RequestDescriptor],
    table: &ProfileTable,
    config: &ClassifierConfig,
) -> Result<Vec<DatasetRow>> {
    let rule = RulePolicy::new(*config, table);
    trace
        .iter()
        .map(|req| {
            let family = req
                .workload_tag
                .ok_or_else(|| Error::UntaggedRequest(req.request_id.clone()))?;
            let mode = rule.route(req)?.mode;
            if class_index(mode).is_none() {
                return Err(Error::Domain(format!(
                    "rule label {mode} for {} is not an oracle class",
                    req.request_id
                )));
            }
            Ok(DatasetRow {
                features: extract_features(req),
                label: mode,
                family,
            })
        })
        .collect()
}

pub fn write_dataset(path: impl AsRef<Path>, rows: &[DatasetRow]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| Error::json("dataset row", e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: DatasetRow = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e))?;
        if class_index(row.label).is_none() {
            return Err(Error::Domain(format!(
                "{}:{}: label {} is not an oracle class",
                path.display(),
                i + 1,
                row.label
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Stratified split: `test_fraction` of each label goes to the test set
/// (rounded), chosen by a seeded shuffle. Both halves keep input order.
pub fn stratified_split(
    rows: &[DatasetRow],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<DatasetRow>, Vec<DatasetRow>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
    }
    let mut by_label: BTreeMap<InferenceMode, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_label.entry(r.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; rows.len()];
    for idx in by_label.values_mut() {
        idx.shuffle(&mut rng);
        let k = (idx.len() as f64 * test_fraction).round() as usize;
        for &i in idx.iter().take(k) {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = rows
        .iter()
        .cloned()
        .zip(is_test)
        .partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(r, _)| r).collect(),
        test.into_iter().map(|(r, _)| r).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 6,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub features_per_split: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 50,
            features_per_split: default_features_per_split(),
            max_depth: 6,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            learning_rate: 0.1,
            iterations: 2000,
            l2: 1e-3,
        }
    }
}

/// Greedy CART with weighted Gini; `seed` only breaks equal-impurity ties.
pub fn train_tree(
    rows: &[DatasetRow],
    max_depth: usize,
    min_samples_split: usize,
    seed: u64,
) -> Result<DecisionTreeModel> {
    let s = samples(rows)?;
    let params = tree::TreeParams {
        max_depth,
        min_samples_split,
        features_per_split: None,
    };
    tree::fit_tree(&s, (0..s.len()).collect(), params, seed)
}

pub fn train_forest(rows: &[DatasetRow], config: &ForestConfig) -> Result<RandomForestModel> {
    let s = samples(rows)?;
    forest::fit_forest(
        &s,
        config.n_trees,
        config.features_per_split,
        config.max_depth,
        config.min_samples_split,
        config.seed,
    )
}

pub fn train_logistic(
    rows: &[DatasetRow],
    learning_rate: f64,
    iterations: usize,
    l2: f64,
) -> Result<LogisticModel> {
    let s = samples(rows)?;
    logistic::fit_logistic(&s, learning_rate, iterations, l2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearnedModel {
    Tree(DecisionTreeModel),
    Forest(RandomForestModel),
    Logistic(LogisticModel),
}

impl LearnedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            LearnedModel::Tree(_) => "tree",
            LearnedModel::Forest(_) => "forest",
            LearnedModel::Logistic(_) => "logistic",
        }
    }

    pub fn predict(&self, features: &FeatureVector) -> InferenceMode {
        let x = features.to_array();
        let k = match self {
            LearnedModel::Tree(m) => m.predict_index(&x),
            LearnedModel::Forest(m) => m.predict_index(&x),
            LearnedModel::Logistic(m) => m.predict_index(&x),
        };
        CLASSES[k]
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json_string();
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}

/// Routes with a trained model; the prediction wall-clock is the overhead.
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    model: LearnedModel,
}

impl LearnedPolicy {
    pub fn new(model: LearnedModel) -> Self {
        LearnedPolicy { model }
    }

    pub fn model(&self) -> &LearnedModel {
        &self.model
    }
}

impl RoutingPolicy for LearnedPolicy {
    fn name(&self) -> String {
        self.model.kind().to_string()
    }

    fn route(&self, request: &RequestDescriptor) -> Result<RoutingDecision> {
        let start = Instant::now();
        let mode = self.model.predict(&extract_features(request));
        Ok(RoutingDecision {
            mode,
            reason: DecisionReason::LearnedVote,
            overhead_ms: start.elapsed().as_secs_f64() * 1e3,
            emergency_fallback: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]` in [`CLASSES`] order.
    pub counts: [[usize; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (InferenceMode, InferenceMode)>) -> Result<Self> {
        let mut counts = [[0; N_CLASSES]; N_CLASSES];
        let mut any = false;
        for (truth, pred) in pairs {
            let t = class_index(truth)
                .ok_or_else(|| Error::Domain(format!("{truth} is not an oracle class")))?;
            let p = class_index(pred)
                .ok_or_else(|| Error::Domain(format!("{pred} is not an oracle class")))?;
            counts[t][p] += 1;
            any = true;
        }
        if !any {
            return Err(Error::EmptyDataset);
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: usize = (0..N_CLASSES).map(|i| self.counts[i][i]).sum();
        diag as f64 / self.total() as f64
    }
}

pub fn confusion_matrix(model: &LearnedModel, rows: &[DatasetRow]) -> Result<ConfusionMatrix> {
    ConfusionMatrix::from_pairs(rows.iter().map(|r| (r.label, model.predict(&r.features))))
}

pub fn accuracy(model: &LearnedModel, rows: &[DatasetRow]) -> Result<f64> {
    confusion_matrix(model, rows).map(|c| c.accuracy())
}

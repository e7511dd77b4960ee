mod common;

use modeswitch::learned::{
    accuracy, build_dataset, build_rule_dataset, confusion_matrix, read_dataset, stratified_split,
    train_forest, train_logistic, train_tree, write_dataset, ForestConfig, LearnedModel,
    LearnedPolicy, CLASSES,
};
use modeswitch::profile::ProfileTable;
use modeswitch::report::{comparison_rows, summary_markdown};
use modeswitch::routing::{RulePolicy, StaticPolicy};
use modeswitch::workload::{balanced_family_trace, generate_trace, TraceSpec};
use modeswitch::{
    compare_policies, ClassifierConfig, ConstraintSet, InferenceMode, RoutingPolicy, SimOptions,
    WorkloadFamily,
};

#[test]
fn dataset_train_compare_end_to_end() {
    let table = ProfileTable::shipped_default();
    let trace = balanced_family_trace(20, 11).unwrap();
    let rows = build_dataset(&trace, &table, &ConstraintSet::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path().join("d.jsonl"), &rows).unwrap();
    let rows = read_dataset(dir.path().join("d.jsonl")).unwrap();
    let (train, test) = stratified_split(&rows, 0.2, 1).unwrap();
    assert_eq!(train.len() + test.len(), rows.len());

    let models = vec![
        LearnedModel::Tree(train_tree(&train, 6, 2, 0).unwrap()),
        LearnedModel::Forest(
            train_forest(
                &train,
                &ForestConfig {
                    n_trees: 10,
                    ..ForestConfig::default()
                },
            )
            .unwrap(),
        ),
        LearnedModel::Logistic(train_logistic(&train, 0.1, 500, 1e-3).unwrap()),
    ];
    let mut accs = vec![None];
    for m in &models {
        let cm = confusion_matrix(m, &test).unwrap();
        assert_eq!(cm.total(), test.len());
        let diag: usize = (0..CLASSES.len()).map(|i| cm.counts[i][i]).sum();
        assert_eq!(cm.accuracy(), diag as f64 / test.len() as f64);
        accs.push(Some(cm.accuracy()));
    }

    let rule = RulePolicy::new(ClassifierConfig::default(), &table);
    let learned: Vec<LearnedPolicy> = models.into_iter().map(LearnedPolicy::new).collect();
    let mut policies: Vec<&dyn RoutingPolicy> = vec![&rule];
    policies.extend(learned.iter().map(|p| p as &dyn RoutingPolicy));
    let cmp = compare_policies(&trace, &policies, &table, &SimOptions::default()).unwrap();
    let rows = comparison_rows(&cmp, &accs);
    let names: Vec<&str> = rows.iter().map(|r| r.policy.as_str()).collect();
    assert_eq!(names, ["rule", "tree", "forest", "logistic", "oracle"]);
    for r in &rows[1..4] {
        assert!(r.model_accuracy.is_some());
        assert!(r.mean_speedup > 1.0);
    }
    let md = summary_markdown(&rows, &[]);
    for name in names {
        assert!(md.contains(&format!("| {name} |")));
    }
}

#[test]
fn shallow_tree_recovers_rule_labels() {
    let table = ProfileTable::shipped_default();
    let families = [
        WorkloadFamily::SyntheticSS,
        WorkloadFamily::SyntheticLS,
        WorkloadFamily::SyntheticSL,
        WorkloadFamily::SyntheticLL,
    ];
    let spec = TraceSpec {
        counts: families.iter().map(|&f| (f, 60)).collect(),
        seed: 5,
        ..TraceSpec::default()
    };
    let trace = generate_trace(&spec).unwrap();
    let rows = build_rule_dataset(&trace, &table, &ClassifierConfig::default()).unwrap();
    let (train, test) = stratified_split(&rows, 0.25, 2).unwrap();
    let model = LearnedModel::Tree(train_tree(&train, 4, 2, 0).unwrap());
    assert!(accuracy(&model, &test).unwrap() >= 0.95);
}

#[test]
fn single_label_forest_predicts_that_label() {
    let table = ProfileTable::shipped_default();
    let trace = common::single_family_trace(WorkloadFamily::SharedPrefixChat, 30);
    let rows = build_dataset(&trace, &table, &ConstraintSet::default()).unwrap();
    let forest = train_forest(
        &rows,
        &ForestConfig {
            n_trees: 5,
            ..ForestConfig::default()
        },
    )
    .unwrap();
    let model = LearnedModel::Forest(forest);
    assert!(rows.iter().all(|r| model.predict(&r.features) == r.label));
    assert_eq!(accuracy(&model, &rows).unwrap(), 1.0);
}

#[test]
fn fp16_capture_is_reciprocal_of_oracle_speedup() {
    let table = ProfileTable::shipped_default();
    let trace = balanced_family_trace(5, 0).unwrap();
    let fp16 = StaticPolicy {
        mode: InferenceMode::FP16,
    };
    let cmp = compare_policies(&trace, &[&fp16], &table, &SimOptions::default()).unwrap();
    assert_eq!(cmp.runs[0].report.mean_speedup, 1.0);
    assert!((cmp.oracle_capture[0] - 1.0 / cmp.oracle.mean_speedup).abs() < 1e-12);
    let rows = comparison_rows(&cmp, &[]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].oracle_capture, 1.0);
}

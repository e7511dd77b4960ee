mod common;

use common::*;
use modeswitch::domain::{speedup, write_trace_to};
use modeswitch::learned::{self, DatasetRow, LearnedModel, TreeNode};
use modeswitch::profile::ProfileTable;
use modeswitch::routing::{route_oracle, OraclePolicy, RulePolicy, StaticPolicy};
use modeswitch::sim::{run_policy, simulate_trace, PowerSample, PowerTrace, SimOptions};
use modeswitch::workload::{balanced_family_trace_with_jitter, generate_trace, TraceSpec};
use modeswitch::{
    classify, extract_features, ClassifierConfig, ConstraintSet, InferenceMode, RoutingPolicy,
    WorkloadClass, WorkloadFamily,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn family() -> impl Strategy<Value = WorkloadFamily> {
    prop::sample::select(WorkloadFamily::ALL.to_vec())
}

fn mode() -> impl Strategy<Value = InferenceMode> {
    prop::sample::select(InferenceMode::ALL.to_vec())
}

proptest! {
    #[test]
    fn speedup_reciprocity(a in 1e-3f64..1e6, b in 1e-3f64..1e6) {
        let s = speedup(a, b).unwrap() * speedup(b, a).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enum_text_round_trip(f in family(), m in mode()) {
        prop_assert_eq!(f.to_string().parse::<WorkloadFamily>().unwrap(), f);
        prop_assert_eq!(f.to_string().to_lowercase().parse::<WorkloadFamily>().unwrap(), f);
        prop_assert_eq!(m.to_string().parse::<InferenceMode>().unwrap(), m);
        let j = serde_json::to_string(&m).unwrap();
        prop_assert_eq!(serde_json::from_str::<InferenceMode>(&j).unwrap(), m);
        let j = serde_json::to_string(&f).unwrap();
        prop_assert_eq!(serde_json::from_str::<WorkloadFamily>(&j).unwrap(), f);
    }

    #[test]
    fn classify_precedence(
        prompt in 1u32..8192,
        output in 1u32..2048,
        shared in any::<bool>(),
        memory in any::<bool>(),
        batch in 1u32..8,
        tag in prop::option::of(family()),
    ) {
        let cfg = ClassifierConfig::default();
        let mut r = request(prompt, output, tag);
        r.shared_prefix = shared;
        r.memory_pressure = memory;
        r.batch_pressure = batch;
        let class = classify(&extract_features(&r), &cfg);
        let long_prompt = prompt >= cfg.long_prompt_threshold;
        let long_output = output >= cfg.long_output_threshold;
        let expected = if batch >= cfg.batch_threshold {
            WorkloadClass::Batched
        } else if shared {
            WorkloadClass::SharedPrefix
        } else if memory {
            WorkloadClass::MemoryPressure
        } else if long_output
            && (f64::from(output) / f64::from(prompt) >= cfg.decode_heavy_ratio || !long_prompt)
        {
            WorkloadClass::DecodeHeavy
        } else if long_prompt && !long_output {
            WorkloadClass::PrefillHeavy
        } else {
            WorkloadClass::Balanced
        };
        prop_assert_eq!(class, expected);
    }

    #[test]
    fn oracle_matches_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (table, families, modes) = random_table(&mut rng);
        let constraints = random_constraints(&mut rng);
        for f in families {
            let d = route_oracle(&request(100, 10, Some(f)), f, &table, &constraints, &modes).unwrap();
            prop_assert_eq!(d.mode, brute_force_oracle(&table, f, &constraints, &modes));
            prop_assert_eq!(d.overhead_ms, 0.0);
        }
    }

    #[test]
    fn trapezoid_exact_on_piecewise_linear(
        points in prop::collection::vec((1u32..1000, 0u32..500), 1..20),
        tokens in 1u32..500,
    ) {
        let mut t = 0.0;
        let mut samples = vec![PowerSample { timestamp_ms: 0.0, power_w: 50.0 }];
        for (dt, p) in &points {
            t += f64::from(*dt);
            samples.push(PowerSample { timestamp_ms: t, power_w: f64::from(*p) });
        }
        // rectangle under the lower endpoint plus the triangle above it
        let closed: f64 = samples
            .windows(2)
            .map(|w| {
                let dt = (w[1].timestamp_ms - w[0].timestamp_ms) / 1000.0;
                let lo = w[0].power_w.min(w[1].power_w);
                let hi = w[0].power_w.max(w[1].power_w);
                lo * dt + 0.5 * (hi - lo) * dt
            })
            .sum();
        // inserting midpoints on a linear segment must not change the integral
        let mut refined = Vec::new();
        for w in samples.windows(2) {
            refined.push(w[0]);
            refined.push(PowerSample {
                timestamp_ms: 0.5 * (w[0].timestamp_ms + w[1].timestamp_ms),
                power_w: 0.5 * (w[0].power_w + w[1].power_w),
            });
        }
        refined.push(*samples.last().unwrap());
        let e = PowerTrace::new(samples).unwrap().energy_j();
        let e2 = PowerTrace::new(refined).unwrap().energy_j();
        prop_assert!((e - closed).abs() <= 1e-9 * closed.max(1.0));
        prop_assert!((e - e2).abs() <= 1e-9 * closed.max(1.0));
        let per_token = modeswitch::sim::energy_from_power_trace(
            &PowerTrace::new(vec![
                PowerSample { timestamp_ms: 0.0, power_w: 10.0 },
                PowerSample { timestamp_ms: 1000.0, power_w: 10.0 },
            ]).unwrap(),
            tokens,
        ).unwrap();
        prop_assert!((per_token - 10.0 / f64::from(tokens)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn overhead_strictly_lowers_mean_speedup(
        seed in any::<u64>(),
        extra in 0.01f64..50.0,
        which in 0usize..4,
    ) {
        let table = ProfileTable::shipped_default();
        let trace = balanced_family_trace_with_jitter(2, seed, 0.1).unwrap();
        let base = SimOptions { overhead_override_ms: Some(0.0), ..SimOptions::default() };
        let more = SimOptions { extra_overhead_ms: extra, ..base };
        let policy: Box<dyn RoutingPolicy> = match which {
            0 => Box::new(StaticPolicy { mode: InferenceMode::FP16 }),
            1 => Box::new(StaticPolicy { mode: InferenceMode::GPTQ4 }),
            2 => Box::new(RulePolicy::new(ClassifierConfig::default(), &table)),
            _ => Box::new(OraclePolicy::controller(table.clone(), ConstraintSet::default(), ClassifierConfig::default())),
        };
        let a = run_policy(&trace, policy.as_ref(), &table, &base).unwrap().report;
        let b = run_policy(&trace, policy.as_ref(), &table, &more).unwrap().report;
        prop_assert!(b.mean_speedup < a.mean_speedup);
    }

    #[test]
    fn collapsed_equals_raw_on_balanced_zero_jitter(n in 1usize..6, seed in any::<u64>()) {
        let table = ProfileTable::shipped_default();
        let trace = balanced_family_trace_with_jitter(n, seed, 0.0).unwrap();
        let options = SimOptions { overhead_override_ms: Some(0.0), ..SimOptions::default() };
        for policy in [
            Box::new(RulePolicy::new(ClassifierConfig::default(), &table)) as Box<dyn RoutingPolicy>,
            Box::new(StaticPolicy { mode: InferenceMode::INT8 }),
        ] {
            let r = run_policy(&trace, policy.as_ref(), &table, &options).unwrap().report;
            prop_assert!((r.mean_speedup - r.collapsed_mean_speedup).abs() < 1e-9);
            prop_assert!((r.mean_energy_ratio - r.collapsed_mean_energy_ratio).abs() < 1e-9);
        }
    }

    #[test]
    fn trace_generation_is_byte_deterministic(seed in any::<u64>(), jitter in 0.0f64..0.49, n in 0usize..20) {
        let mut spec = TraceSpec { seed, jitter, ..TraceSpec::default() };
        spec.counts.insert(WorkloadFamily::SyntheticSS, n);
        spec.counts.insert(WorkloadFamily::GSM8K, n / 2);
        spec.batched.insert(WorkloadFamily::MMLUPro, n / 3);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_trace_to(&mut a, &generate_trace(&spec).unwrap()).unwrap();
        write_trace_to(&mut b, &generate_trace(&spec).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn mode_latency_identity(seed in any::<u64>(), overhead in 0.0f64..20.0) {
        let table = ProfileTable::shipped_default();
        let trace = balanced_family_trace_with_jitter(1, seed, 0.3).unwrap();
        let options = SimOptions { overhead_override_ms: Some(overhead), ..SimOptions::default() };
        let rule = RulePolicy::new(ClassifierConfig::default(), &table);
        for r in simulate_trace(&trace, &rule, &table, &options).unwrap() {
            let cell = table.lookup(r.served_mode, r.family).unwrap();
            let expected = r.fp16_latency_ms / cell.latency_speedup + r.decision.overhead_ms;
            prop_assert!((r.mode_latency_ms - expected).abs() < 1e-9);
            prop_assert!((r.decision.overhead_ms - overhead).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_dominates_every_admitted_mode_per_request(seed in any::<u64>()) {
        let table = ProfileTable::shipped_default();
        let constraints = ConstraintSet::default();
        let trace = balanced_family_trace_with_jitter(2, seed, 0.2).unwrap();
        let options = SimOptions::default();
        let oracle = OraclePolicy::controller(table.clone(), constraints, ClassifierConfig::default());
        let oracle_res = simulate_trace(&trace, &oracle, &table, &options).unwrap();
        for m in InferenceMode::CONTROLLER_CANDIDATES {
            let res = simulate_trace(&trace, &StaticPolicy { mode: m }, &table, &options).unwrap();
            for (o, s) in oracle_res.iter().zip(&res) {
                if !s.constraint_violated && !s.simulator_fallback {
                    prop_assert!(o.speedup >= s.speedup, "{} {m}", s.request_id);
                }
            }
        }
    }
}

fn tree_rows(seed: u64, n: usize) -> Vec<DatasetRow> {
    let table = ProfileTable::shipped_default();
    let trace = balanced_family_trace_with_jitter(n, seed, 0.3).unwrap();
    learned::build_rule_dataset(&trace, &table, &ClassifierConfig::default()).unwrap()
}

fn gini(counts: &[usize; 5]) -> (f64, usize) {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return (0.0, 0);
    }
    let g = 1.0 - counts.iter().map(|&c| (c as f64 / n as f64).powi(2)).sum::<f64>();
    (g, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn accepted_splits_never_raise_impurity(seed in any::<u64>(), depth in 1usize..7) {
        let rows = tree_rows(seed, 4);
        let tree = learned::train_tree(&rows, depth, 2, seed).unwrap();
        prop_assert!(tree.depth() <= depth);
        let mut reach = vec![[0usize; 5]; tree.nodes.len()];
        for r in &rows {
            let x = r.features.to_array();
            let label = learned::class_index(r.label).unwrap();
            let mut node = 0;
            loop {
                reach[node][label] += 1;
                match &tree.nodes[node] {
                    TreeNode::Split { feature_index, threshold, left, right } => {
                        node = if x[*feature_index] <= *threshold { *left } else { *right };
                    }
                    TreeNode::Leaf { .. } => break,
                }
            }
        }
        for (i, n) in tree.nodes.iter().enumerate() {
            if let TreeNode::Leaf { class_counts } = n {
                prop_assert_eq!(class_counts, &reach[i]);
            }
            if let TreeNode::Split { left, right, .. } = n {
                let (gp, np) = gini(&reach[i]);
                let (gl, nl) = gini(&reach[*left]);
                let (gr, nr) = gini(&reach[*right]);
                prop_assert!(nl > 0 && nr > 0);
                let child = (nl as f64 * gl + nr as f64 * gr) / np as f64;
                prop_assert!(child <= gp + 1e-12);
            }
        }
    }

    #[test]
    fn trainers_are_bit_deterministic(seed in any::<u64>()) {
        let rows = tree_rows(seed, 3);
        let t1 = learned::train_tree(&rows, 6, 2, seed).unwrap();
        let t2 = learned::train_tree(&rows, 6, 2, seed).unwrap();
        prop_assert_eq!(&t1, &t2);
        let cfg = learned::ForestConfig { n_trees: 5, seed, ..Default::default() };
        prop_assert_eq!(learned::train_forest(&rows, &cfg).unwrap(), learned::train_forest(&rows, &cfg).unwrap());
        let l1 = LearnedModel::Logistic(learned::train_logistic(&rows, 0.1, 50, 1e-3).unwrap());
        let l2 = LearnedModel::Logistic(learned::train_logistic(&rows, 0.1, 50, 1e-3).unwrap());
        prop_assert_eq!(l1.to_json_string(), l2.to_json_string());
    }
}

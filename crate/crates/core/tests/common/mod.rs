#![allow(dead_code)]

use modeswitch::profile::{BaselineCostModel, ModeProfileCell, ProfileTable, Provenance};
use modeswitch::workload::{generate_trace, TraceSpec};
use modeswitch::{ConstraintSet, InferenceMode, RequestDescriptor, WorkloadFamily};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn request(prompt: u32, output: u32, tag: Option<WorkloadFamily>) -> RequestDescriptor {
    RequestDescriptor {
        request_id: "r".into(),
        prompt_tokens: prompt,
        expected_output_tokens: output,
        shared_prefix: false,
        memory_pressure: false,
        batch_pressure: 1,
        workload_tag: tag,
    }
}

pub fn cell(
    mode: InferenceMode,
    family: WorkloadFamily,
    speedup: f64,
    energy: f64,
    memory: f64,
    quality: f64,
    feasible: bool,
) -> ModeProfileCell {
    ModeProfileCell {
        mode,
        family,
        batched: false,
        latency_speedup: speedup,
        energy_ratio: energy,
        memory_ratio: memory,
        quality_delta_pp: quality,
        feasible,
        provenance: Provenance::Synthesized,
        measured: None,
    }
}

/// Independent enumeration: every candidate with a feasible, admitted cell,
/// sorted by (speedup desc, energy asc, mode order); FP16 when none qualifies.
pub fn brute_force_oracle(
    table: &ProfileTable,
    family: WorkloadFamily,
    constraints: &ConstraintSet,
    candidates: &[InferenceMode],
) -> InferenceMode {
    let mut ok: Vec<&ModeProfileCell> = table
        .cells()
        .filter(|c| c.family == family && !c.batched && candidates.contains(&c.mode))
        .filter(|c| {
            c.feasible
                && c.quality_delta_pp >= constraints.quality_floor_pp
                && c.energy_ratio <= constraints.energy_ratio_max
                && c.memory_ratio <= constraints.memory_ratio_max
        })
        .collect();
    ok.sort_by(|a, b| {
        b.latency_speedup
            .total_cmp(&a.latency_speedup)
            .then(a.energy_ratio.total_cmp(&b.energy_ratio))
            .then(a.mode.cmp(&b.mode))
    });
    ok.first().map_or(InferenceMode::FP16, |c| c.mode)
}

/// Small random table (up to 6 modes x 4 families) with coarse values so
/// speed and energy ties are common.
pub fn random_table(rng: &mut impl Rng) -> (ProfileTable, Vec<WorkloadFamily>, Vec<InferenceMode>) {
    let n_fam = rng.gen_range(1..=4);
    let n_modes = rng.gen_range(1..=6);
    let mut families = WorkloadFamily::ALL.to_vec();
    families.shuffle(rng);
    families.truncate(n_fam);
    let mut modes: Vec<InferenceMode> = InferenceMode::ALL
        .iter()
        .copied()
        .filter(|m| *m != InferenceMode::FP16)
        .collect();
    modes.shuffle(rng);
    modes.truncate(n_modes - 1);
    modes.push(InferenceMode::FP16);

    let mut cells = Vec::new();
    for &f in &families {
        cells.push(ModeProfileCell::fp16_identity(f));
        for &m in modes.iter().filter(|m| **m != InferenceMode::FP16) {
            if rng.gen_bool(0.15) {
                continue;
            }
            cells.push(cell(
                m,
                f,
                f64::from(rng.gen_range(2..=12)) * 0.25,
                f64::from(rng.gen_range(1..=6)) * 0.25,
                f64::from(rng.gen_range(2..=6)) * 0.25,
                f64::from(rng.gen_range(-8..=4)) * 0.5,
                rng.gen_bool(0.85),
            ));
        }
    }
    let table = ProfileTable::new(BaselineCostModel::default(), cells).expect("valid random table");
    (table, families, modes)
}

pub fn random_constraints(rng: &mut impl Rng) -> ConstraintSet {
    ConstraintSet {
        quality_floor_pp: f64::from(rng.gen_range(-6..=1)) * 0.5,
        energy_ratio_max: f64::from(rng.gen_range(2..=6)) * 0.25,
        memory_ratio_max: f64::from(rng.gen_range(2..=6)) * 0.25,
    }
}

pub fn single_family_trace(family: WorkloadFamily, n: usize) -> Vec<RequestDescriptor> {
    let mut spec = TraceSpec {
        jitter: 0.0,
        ..TraceSpec::default()
    };
    spec.counts.insert(family, n);
    generate_trace(&spec).unwrap()
}

pub fn benchmark_trace(n: usize, seed: u64) -> Vec<RequestDescriptor> {
    let spec = TraceSpec {
        counts: WorkloadFamily::BENCHMARKS.iter().map(|&f| (f, n)).collect(),
        seed,
        ..TraceSpec::default()
    };
    generate_trace(&spec).unwrap()
}

//! Deterministic synthetic traces over the workload taxonomy.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{RequestDescriptor, WorkloadFamily};
use crate::error::{Error, Result};

/// Nominal (prompt, output) token counts for a family.
///
/// Benchmark shapes are artifact conventions: choice-scored benchmarks get
/// short outputs, GSM8K a long generated solution.
pub fn nominal_shape(family: WorkloadFamily) -> (u32, u32) {
    use WorkloadFamily::*;
    match family {
        SyntheticSS => (128, 32),
        SyntheticSL => (128, 128),
        SyntheticLS => (1024, 32),
        SyntheticLL => (1024, 128),
        SharedPrefixChat => (1024, 128),
        MemoryPressureLongContext => (2048, 128),
        MMLUPro => (400, 16),
        GSM8K => (250, 256),
        TruthfulQA => (200, 48),
        GPQA => (500, 16),
        MLU => (300, 16),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    /// Single-request counts per family.
    pub counts: BTreeMap<WorkloadFamily, usize>,
    /// Batched-slice counts per family; these requests carry `batch_pressure`.
    #[serde(default)]
    pub batched: BTreeMap<WorkloadFamily, usize>,
    pub jitter: f64,
    pub seed: u64,
    pub batch_pressure: u32,
}

impl Default for TraceSpec {
    fn default() -> Self {
        TraceSpec {
            counts: BTreeMap::new(),
            batched: BTreeMap::new(),
            jitter: 0.10,
            seed: 0,
            batch_pressure: 4,
        }
    }
}

impl TraceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Config(format!(
                "jitter must lie in [0, 0.5), got {}",
                self.jitter
            )));
        }
        if self.batch_pressure < 2 && self.batched.values().any(|&n| n > 0) {
            return Err(Error::Config(
                "batched slices need batch_pressure >= 2".into(),
            ));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum::<usize>() + self.batched.values().sum::<usize>()
    }
}

fn jittered(nominal: u32, jitter: f64, rng: &mut ChaCha8Rng) -> u32 {
    if jitter == 0.0 {
        return nominal;
    }
    let u: f64 = rng.gen_range(-jitter..=jitter);
    let v = (f64::from(nominal) * (1.0 + u)).round();
    (v as u32).max(1)
}

fn make_request(
    id: String,
    family: WorkloadFamily,
    batch_pressure: u32,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> RequestDescriptor {
    let (prompt, output) = nominal_shape(family);
    RequestDescriptor {
        request_id: id,
        prompt_tokens: jittered(prompt, jitter, rng),
        expected_output_tokens: jittered(output, jitter, rng),
        shared_prefix: family == WorkloadFamily::SharedPrefixChat,
        memory_pressure: family == WorkloadFamily::MemoryPressureLongContext,
        batch_pressure,
        workload_tag: Some(family),
    }
}

/// Emits single requests family by family (enumeration order), then the
/// batched slices, all tagged with their family.
pub fn generate_trace(spec: &TraceSpec) -> Result<Vec<RequestDescriptor>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.total());
    for (&family, &n) in &spec.counts {
        for i in 0..n {
            out.push(make_request(
                format!("{family}-{i:05}"),
                family,
                1,
                spec.jitter,
                &mut rng,
            ));
        }
    }
    for (&family, &n) in &spec.batched {
        for i in 0..n {
            out.push(make_request(
                format!("{family}-batch-{i:05}"),
                family,
                spec.batch_pressure,
                spec.jitter,
                &mut rng,
            ));
        }
    }
    Ok(out)
}

/// Equal counts for all eleven families with the default jitter.
pub fn balanced_family_trace(n_per_family: usize, seed: u64) -> Result<Vec<RequestDescriptor>> {
    balanced_family_trace_with_jitter(n_per_family, seed, TraceSpec::default().jitter)
}

pub fn balanced_family_trace_with_jitter(
    n_per_family: usize,
    seed: u64,
    jitter: f64,
) -> Result<Vec<RequestDescriptor>> {
    if n_per_family < 1 {
        return Err(Error::Config("n_per_family must be >= 1".into()));
    }
    let spec = TraceSpec {
        counts: WorkloadFamily::ALL.iter().map(|&f| (f, n_per_family)).collect(),
        jitter,
        seed,
        ..TraceSpec::default()
    };
    generate_trace(&spec)
}

/// Sidecar metadata written next to generated traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub spec: TraceSpec,
    pub nominal_shapes: BTreeMap<WorkloadFamily, (u32, u32)>,
    pub notes: Vec<String>,
}

impl TraceMetadata {
    pub fn for_spec(spec: &TraceSpec) -> Self {
        TraceMetadata {
            spec: spec.clone(),
            nominal_shapes: WorkloadFamily::ALL
                .iter()
                .map(|&f| (f, nominal_shape(f)))
                .collect(),
            notes: vec![
                "benchmark-family prompt/output shapes are conventions, not measured lengths".into(),
                "memory pressure is a descriptor flag; nothing is allocated".into(),
            ],
        }
    }
}

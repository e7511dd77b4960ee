//! Routing policies: the seven-rule priority controller, the
//! constraint-aware oracle and static single-mode baselines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{classify, extract_features, resolve_family, ClassifierConfig};
use crate::domain::{
    EvalMode, InferenceMode, RequestDescriptor, WorkloadClass, WorkloadFamily,
};
use crate::error::{Error, Result};
use crate::profile::{ModeProfileCell, ProfileTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionReason {
    Rule1Batched,
    Rule2SharedPrefix,
    Rule3MemoryPressure,
    Rule4SyntheticShape,
    Rule5DecodeHeavy,
    Rule6ChoiceBenchmark,
    Rule7Default,
    OracleFeasibleFastest,
    OracleFallbackFP16,
    Static,
    LearnedVote,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub mode: InferenceMode,
    pub reason: DecisionReason,
    /// Wall-clock cost of making the decision.
    pub overhead_ms: f64,
    /// Set when the rule controller's pick had no usable profile cell and
    /// FP16 was substituted.
    #[serde(default)]
    pub emergency_fallback: bool,
}

impl RoutingDecision {
    pub fn new(mode: InferenceMode, reason: DecisionReason) -> Self {
        RoutingDecision {
            mode,
            reason,
            overhead_ms: 0.0,
            emergency_fallback: false,
        }
    }
}

/// Quality floor plus energy and memory caps, all relative to FP16.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintSet {
    pub quality_floor_pp: f64,
    pub energy_ratio_max: f64,
    pub memory_ratio_max: f64,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet {
            quality_floor_pp: -1.5,
            energy_ratio_max: 1.0,
            memory_ratio_max: 1.10,
        }
    }
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<()> {
        if !self.quality_floor_pp.is_finite() {
            return Err(Error::Config("quality_floor_pp must be finite".into()));
        }
        if !(self.energy_ratio_max > 0.0) || !(self.memory_ratio_max > 0.0) {
            return Err(Error::Config(
                "energy_ratio_max and memory_ratio_max must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Quality is a one-sided floor; energy and memory are one-sided caps.
    pub fn admits(&self, cell: &ModeProfileCell) -> bool {
        cell.quality_delta_pp >= self.quality_floor_pp
            && cell.energy_ratio <= self.energy_ratio_max
            && cell.memory_ratio <= self.memory_ratio_max
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn rule_choice(request: &RequestDescriptor, class: WorkloadClass) -> (InferenceMode, DecisionReason) {
    use DecisionReason::*;
    use InferenceMode::*;
    use WorkloadFamily as F;

    let tag = request.workload_tag;
    match class {
        WorkloadClass::Batched => return (INT8PlusContinuousBatching, Rule1Batched),
        WorkloadClass::SharedPrefix => return (GPTQPlusPrefixCaching, Rule2SharedPrefix),
        WorkloadClass::MemoryPressure => return (GPTQ4, Rule3MemoryPressure),
        _ => {}
    }
    if matches!(tag, Some(F::SyntheticSS | F::SyntheticLS | F::SyntheticLL)) {
        return (GPTQ4, Rule4SyntheticShape);
    }
    if class == WorkloadClass::DecodeHeavy || tag == Some(F::GSM8K) {
        return (SpeculativeDecoding, Rule5DecodeHeavy);
    }
    if let Some(fam) = tag.filter(|f| f.is_benchmark()) {
        if fam.eval_mode() == EvalMode::Choice || class == WorkloadClass::PrefillHeavy {
            return (INT8, Rule6ChoiceBenchmark);
        }
    }
    (INT8, Rule7Default)
}

/// Applies the priority rules 1-7 in order. `class` must come from
/// [`classify`] on the same request.
pub fn route_rule(
    request: &RequestDescriptor,
    class: WorkloadClass,
    _config: &ClassifierConfig,
) -> RoutingDecision {
    let start = Instant::now();
    let (mode, reason) = rule_choice(request, class);
    RoutingDecision {
        mode,
        reason,
        overhead_ms: elapsed_ms(start),
        emergency_fallback: false,
    }
}

pub fn route_static(mode: InferenceMode) -> RoutingDecision {
    RoutingDecision::new(mode, DecisionReason::Static)
}

/// Picks the fastest candidate whose cell is feasible and admitted by
/// `constraints`. Ties go to the lower energy ratio, then to the earlier
/// mode in [`InferenceMode::ALL`]. Candidates without a cell are skipped.
///
/// The oracle is an offline reference, so its decisions carry zero overhead.
pub fn route_oracle(
    request: &RequestDescriptor,
    family: WorkloadFamily,
    table: &ProfileTable,
    constraints: &ConstraintSet,
    candidates: &[InferenceMode],
) -> Result<RoutingDecision> {
    table.lookup(InferenceMode::FP16, family)?;
    let batched = request.is_batched();

    let mut best: Option<&ModeProfileCell> = None;
    let mut non_fp16_admitted = false;
    let mut non_fp16_considered = false;
    for (i, &mode) in candidates.iter().enumerate() {
        if candidates[..i].contains(&mode) {
            continue;
        }
        if mode != InferenceMode::FP16 {
            non_fp16_considered = true;
        }
        let cell = match table.lookup_context(mode, family, batched) {
            Ok(cell) => cell,
            Err(_) => {
                log::debug!(
                    "oracle: no profile cell for ({mode}, {family}), skipping for {}",
                    request.request_id
                );
                continue;
            }
        };
        if !cell.feasible || !constraints.admits(cell) {
            continue;
        }
        if mode != InferenceMode::FP16 {
            non_fp16_admitted = true;
        }
        if best.is_none_or(|b| oracle_prefers(cell, b)) {
            best = Some(cell);
        }
    }

    let decision = match best {
        Some(cell) if cell.mode != InferenceMode::FP16 || non_fp16_admitted || !non_fp16_considered => {
            RoutingDecision::new(cell.mode, DecisionReason::OracleFeasibleFastest)
        }
        _ => RoutingDecision::new(InferenceMode::FP16, DecisionReason::OracleFallbackFP16),
    };
    Ok(decision)
}

fn oracle_prefers(a: &ModeProfileCell, b: &ModeProfileCell) -> bool {
    if a.latency_speedup != b.latency_speedup {
        return a.latency_speedup > b.latency_speedup;
    }
    if a.energy_ratio != b.energy_ratio {
        return a.energy_ratio < b.energy_ratio;
    }
    a.mode.index() < b.mode.index()
}

/// A routing policy usable by the simulator.
pub trait RoutingPolicy: Send + Sync {
    fn name(&self) -> String;

    fn route(&self, request: &RequestDescriptor) -> Result<RoutingDecision>;

    /// Policies that follow the oracle by construction.
    fn is_oracle(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct StaticPolicy {
    pub mode: InferenceMode,
}

impl RoutingPolicy for StaticPolicy {
    fn name(&self) -> String {
        if self.mode == InferenceMode::FP16 {
            "fp16".into()
        } else {
            format!("static:{}", self.mode.name().to_lowercase())
        }
    }

    fn route(&self, _request: &RequestDescriptor) -> Result<RoutingDecision> {
        Ok(route_static(self.mode))
    }
}

const N_MODES: usize = InferenceMode::ALL.len();
const N_FAMILIES: usize = WorkloadFamily::ALL.len();

/// The seven-rule controller, with FP16 substituted when the chosen mode has
/// no usable profile cell.
#[derive(Debug, Clone)]
pub struct RulePolicy {
    config: ClassifierConfig,
    usable: [[[bool; 2]; N_FAMILIES]; N_MODES],
}

impl RulePolicy {
    pub fn new(config: ClassifierConfig, table: &ProfileTable) -> Self {
        let mut usable = [[[false; 2]; N_FAMILIES]; N_MODES];
        for mode in InferenceMode::ALL {
            for family in WorkloadFamily::ALL {
                for batched in [false, true] {
                    usable[mode.index()][family.index()][usize::from(batched)] =
                        table.is_usable(mode, family, batched);
                }
            }
        }
        RulePolicy { config, usable }
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    fn decide(&self, request: &RequestDescriptor) -> RoutingDecision {
        let features = extract_features(request);
        let class = classify(&features, &self.config);
        let (mode, reason) = rule_choice(request, class);
        let family = resolve_family(request, &self.config);
        let usable = self.usable[mode.index()][family.index()][usize::from(request.is_batched())];
        RoutingDecision {
            mode: if usable { mode } else { InferenceMode::FP16 },
            reason,
            overhead_ms: 0.0,
            emergency_fallback: !usable,
        }
    }
}

impl RoutingPolicy for RulePolicy {
    fn name(&self) -> String {
        "rule".into()
    }

    fn route(&self, request: &RequestDescriptor) -> Result<RoutingDecision> {
        let start = Instant::now();
        let mut decision = self.decide(request);
        decision.overhead_ms = elapsed_ms(start);
        Ok(decision)
    }
}

#[derive(Debug, Clone)]
pub struct OraclePolicy {
    table: ProfileTable,
    constraints: ConstraintSet,
    config: ClassifierConfig,
    candidates: Vec<InferenceMode>,
}

impl OraclePolicy {
    pub fn new(
        table: ProfileTable,
        constraints: ConstraintSet,
        config: ClassifierConfig,
        candidates: Vec<InferenceMode>,
    ) -> Self {
        OraclePolicy {
            table,
            constraints,
            config,
            candidates,
        }
    }

    /// Oracle over the controller's candidate set.
    pub fn controller(table: ProfileTable, constraints: ConstraintSet, config: ClassifierConfig) -> Self {
        Self::new(
            table,
            constraints,
            config,
            InferenceMode::CONTROLLER_CANDIDATES.to_vec(),
        )
    }
}

impl RoutingPolicy for OraclePolicy {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn route(&self, request: &RequestDescriptor) -> Result<RoutingDecision> {
        let family = resolve_family(request, &self.config);
        route_oracle(request, family, &self.table, &self.constraints, &self.candidates)
    }

    fn is_oracle(&self) -> bool {
        true
    }
}

//! Profile-driven replay of a trace through a routing policy, with
//! per-request metrics and per-family / collapsed aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{resolve_family, ClassifierConfig};
use crate::domain::{throughput_tps, InferenceMode, RequestDescriptor, RequestMetrics, WorkloadFamily};
use crate::error::{Error, Result};
use crate::profile::{fp16_latency, BaselineCostModel, ProfileTable, Provenance};
use crate::routing::{ConstraintSet, DecisionReason, OraclePolicy, RoutingDecision, RoutingPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub timestamp_ms: f64,
    pub power_w: f64,
}

/// Polled power samples with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    samples: Vec<PowerSample>,
}

impl PowerTrace {
    pub fn new(samples: Vec<PowerSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::PowerTrace(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        for s in &samples {
            if !(s.timestamp_ms >= 0.0) || !(s.power_w >= 0.0) || !s.power_w.is_finite() {
                return Err(Error::PowerTrace(format!(
                    "invalid sample ({}, {})",
                    s.timestamp_ms, s.power_w
                )));
            }
        }
        if let Some(w) = samples.windows(2).find(|w| w[1].timestamp_ms <= w[0].timestamp_ms) {
            return Err(Error::PowerTrace(format!(
                "timestamps must be strictly increasing ({} then {})",
                w[0].timestamp_ms, w[1].timestamp_ms
            )));
        }
        Ok(PowerTrace { samples })
    }

    pub fn samples(&self) -> &[PowerSample] {
        &self.samples
    }

    /// Trapezoidal integral of power over time, in joules.
    pub fn energy_j(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                let dt_s = (w[1].timestamp_ms - w[0].timestamp_ms) / 1000.0;
                0.5 * (w[0].power_w + w[1].power_w) * dt_s
            })
            .sum()
    }
}

/// Reads a `timestamp_ms,power_w` CSV.
pub fn read_power_trace(path: impl AsRef<Path>) -> Result<PowerTrace> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(&ctx, e))?;
    let samples = rdr
        .deserialize::<PowerSample>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::csv(&ctx, e))?;
    PowerTrace::new(samples)
}

pub fn write_power_trace(path: impl AsRef<Path>, trace: &PowerTrace) -> Result<()> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(&ctx, e))?;
    for s in trace.samples() {
        w.serialize(s).map_err(|e| Error::csv(&ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Energy per generated token from a power trace.
pub fn energy_from_power_trace(trace: &PowerTrace, tokens: u32) -> Result<f64> {
    if tokens == 0 {
        return Err(Error::PowerTrace("token count must be positive".into()));
    }
    Ok(trace.energy_j() / f64::from(tokens))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub classifier: ClassifierConfig,
    pub constraints: ConstraintSet,
    /// Serve FP16 when the routed mode has no usable cell instead of failing.
    pub fallback_enabled: bool,
    /// Added to every decision's overhead.
    pub extra_overhead_ms: f64,
    /// Replaces measured overhead of rule and learned decisions.
    pub overhead_override_ms: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            classifier: ClassifierConfig::default(),
            constraints: ConstraintSet::default(),
            fallback_enabled: true,
            extra_overhead_ms: 0.0,
            overhead_override_ms: None,
        }
    }
}

impl SimOptions {
    fn adjust(&self, mut decision: RoutingDecision) -> RoutingDecision {
        let measured = !matches!(
            decision.reason,
            DecisionReason::Static
                | DecisionReason::OracleFeasibleFastest
                | DecisionReason::OracleFallbackFP16
        );
        if let (Some(v), true) = (self.overhead_override_ms, measured) {
            decision.overhead_ms = v;
        }
        decision.overhead_ms += self.extra_overhead_ms;
        decision
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRequestResult {
    pub request_id: String,
    pub decision: RoutingDecision,
    pub family: WorkloadFamily,
    /// Mode actually served (FP16 when the simulator fell back).
    pub served_mode: InferenceMode,
    pub output_tokens: u32,
    pub fp16_latency_ms: f64,
    pub mode_latency_ms: f64,
    pub speedup: f64,
    pub energy_ratio: f64,
    pub memory_ratio: f64,
    pub quality_delta_pp: f64,
    pub constraint_violated: bool,
    /// A Synthesized profile cell was used.
    pub provenance_flag: bool,
    pub simulator_fallback: bool,
}

impl SimRequestResult {
    pub fn metrics(&self, costs: &BaselineCostModel) -> RequestMetrics {
        RequestMetrics {
            latency_ms: self.mode_latency_ms,
            energy_per_token_j: costs.fp16_energy_j_per_token * self.energy_ratio,
            throughput_tps: throughput_tps(self.output_tokens, self.mode_latency_ms),
            memory_ratio: self.memory_ratio,
            quality_delta_pp: self.quality_delta_pp,
            routing_overhead_ms: self.decision.overhead_ms,
        }
    }
}

/// Mode latency is the FP16 latency divided by the cell speedup, plus the
/// decision's routing overhead.
pub fn simulate_request(
    request: &RequestDescriptor,
    decision: RoutingDecision,
    table: &ProfileTable,
    options: &SimOptions,
) -> Result<SimRequestResult> {
    let family = resolve_family(request, &options.classifier);
    let batched = request.is_batched();
    let wrap = |e: Error| Error::Simulation {
        request_id: request.request_id.clone(),
        source: Box::new(e),
    };

    let routed = table
        .lookup_context(decision.mode, family, batched)
        .and_then(|c| {
            if c.feasible {
                Ok(c)
            } else {
                Err(Error::InfeasibleCell {
                    mode: c.mode,
                    family,
                })
            }
        });
    let (cell, fell_back) = match routed {
        Ok(c) => (c, false),
        Err(e) if options.fallback_enabled => {
            log::debug!("{}: {e}; serving FP16", request.request_id);
            (table.lookup(InferenceMode::FP16, family).map_err(wrap)?, true)
        }
        Err(e) => return Err(wrap(e)),
    };

    let fp16_ms = fp16_latency(table.baseline_costs(), request);
    let mode_ms = fp16_ms / cell.latency_speedup + decision.overhead_ms;
    Ok(SimRequestResult {
        request_id: request.request_id.clone(),
        decision,
        family,
        served_mode: cell.mode,
        output_tokens: request.expected_output_tokens,
        fp16_latency_ms: fp16_ms,
        mode_latency_ms: mode_ms,
        speedup: fp16_ms / mode_ms,
        energy_ratio: cell.energy_ratio,
        memory_ratio: cell.memory_ratio,
        quality_delta_pp: cell.quality_delta_pp,
        constraint_violated: !options.constraints.admits(cell),
        provenance_flag: cell.provenance == Provenance::Synthesized,
        simulator_fallback: fell_back,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: WorkloadFamily,
    pub n_requests: usize,
    pub mean_speedup: f64,
    pub mean_energy_ratio: f64,
    pub mean_memory_ratio: f64,
    pub mean_quality_delta_pp: f64,
    pub constraint_violation_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: String,
    pub n_requests: usize,
    pub mean_speedup: f64,
    /// Sum of FP16 latencies over sum of mode latencies.
    pub ratio_of_means_speedup: f64,
    pub mean_energy_ratio: f64,
    pub mean_memory_ratio: f64,
    pub mean_quality_delta_pp: f64,
    pub collapsed_mean_speedup: f64,
    pub collapsed_mean_energy_ratio: f64,
    pub oracle_match_rate: f64,
    pub constraint_violation_rate: f64,
    pub mean_overhead_ms: f64,
    pub synthesized_cell_usage: f64,
    pub fallback_rate: f64,
    pub per_family: Vec<FamilySummary>,
}

#[derive(Default)]
struct Acc {
    n: usize,
    speedup: f64,
    energy: f64,
    memory: f64,
    quality: f64,
    violations: usize,
}

impl Acc {
    fn add(&mut self, r: &SimRequestResult) {
        self.n += 1;
        self.speedup += r.speedup;
        self.energy += r.energy_ratio;
        self.memory += r.memory_ratio;
        self.quality += r.quality_delta_pp;
        self.violations += usize::from(r.constraint_violated);
    }

    fn mean(&self, sum: f64) -> f64 {
        sum / self.n as f64
    }
}

/// Aggregates per-request results. `oracle_modes[i]` is the oracle's pick for
/// `results[i]`.
pub fn aggregate(
    policy: &str,
    results: &[SimRequestResult],
    oracle_modes: &[InferenceMode],
) -> Result<PolicyReport> {
    if results.is_empty() {
        return Err(Error::Domain("cannot aggregate an empty trace".into()));
    }
    assert_eq!(results.len(), oracle_modes.len());

    let mut total = Acc::default();
    let mut by_family: BTreeMap<WorkloadFamily, Acc> = BTreeMap::new();
    let (mut fp16_sum, mut mode_sum, mut overhead, mut synth, mut matches, mut fallbacks) =
        (0.0, 0.0, 0.0, 0usize, 0usize, 0usize);
    for (r, oracle) in results.iter().zip(oracle_modes) {
        total.add(r);
        by_family.entry(r.family).or_default().add(r);
        fp16_sum += r.fp16_latency_ms;
        mode_sum += r.mode_latency_ms;
        overhead += r.decision.overhead_ms;
        synth += usize::from(r.provenance_flag);
        matches += usize::from(r.decision.mode == *oracle);
        fallbacks += usize::from(r.simulator_fallback || r.decision.emergency_fallback);
    }
    let n = results.len() as f64;
    let per_family: Vec<FamilySummary> = by_family
        .iter()
        .map(|(&family, a)| FamilySummary {
            family,
            n_requests: a.n,
            mean_speedup: a.mean(a.speedup),
            mean_energy_ratio: a.mean(a.energy),
            mean_memory_ratio: a.mean(a.memory),
            mean_quality_delta_pp: a.mean(a.quality),
            constraint_violation_rate: a.violations as f64 / a.n as f64,
        })
        .collect();
    let k = per_family.len() as f64;

    Ok(PolicyReport {
        policy: policy.to_string(),
        n_requests: results.len(),
        mean_speedup: total.mean(total.speedup),
        ratio_of_means_speedup: fp16_sum / mode_sum,
        mean_energy_ratio: total.mean(total.energy),
        mean_memory_ratio: total.mean(total.memory),
        mean_quality_delta_pp: total.mean(total.quality),
        collapsed_mean_speedup: per_family.iter().map(|f| f.mean_speedup).sum::<f64>() / k,
        collapsed_mean_energy_ratio: per_family.iter().map(|f| f.mean_energy_ratio).sum::<f64>()
            / k,
        oracle_match_rate: matches as f64 / n,
        constraint_violation_rate: total.violations as f64 / n,
        mean_overhead_ms: overhead / n,
        synthesized_cell_usage: synth as f64 / n,
        fallback_rate: fallbacks as f64 / n,
        per_family,
    })
}

/// Routes and simulates every request, in trace order.
pub fn simulate_trace(
    trace: &[RequestDescriptor],
    policy: &dyn RoutingPolicy,
    table: &ProfileTable,
    options: &SimOptions,
) -> Result<Vec<SimRequestResult>> {
    trace
        .iter()
        .map(|req| {
            let decision = policy.route(req).map_err(|e| Error::Simulation {
                request_id: req.request_id.clone(),
                source: Box::new(e),
            })?;
            simulate_request(req, options.adjust(decision), table, options)
        })
        .collect()
}

fn oracle_modes(
    trace: &[RequestDescriptor],
    table: &ProfileTable,
    options: &SimOptions,
) -> Result<Vec<InferenceMode>> {
    let oracle = OraclePolicy::controller(table.clone(), options.constraints, options.classifier);
    trace
        .iter()
        .map(|r| {
            oracle.route(r).map(|d| d.mode).map_err(|e| Error::Simulation {
                request_id: r.request_id.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub report: PolicyReport,
    pub results: Vec<SimRequestResult>,
}

pub fn run_policy(
    trace: &[RequestDescriptor],
    policy: &dyn RoutingPolicy,
    table: &ProfileTable,
    options: &SimOptions,
) -> Result<PolicyRun> {
    let oracle = oracle_modes(trace, table, options)?;
    run_policy_with_oracle(trace, policy, table, options, &oracle)
}

fn run_policy_with_oracle(
    trace: &[RequestDescriptor],
    policy: &dyn RoutingPolicy,
    table: &ProfileTable,
    options: &SimOptions,
    oracle: &[InferenceMode],
) -> Result<PolicyRun> {
    let results = simulate_trace(trace, policy, table, options)?;
    let report = aggregate(&policy.name(), &results, oracle)?;
    Ok(PolicyRun { report, results })
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<PolicyRun>,
    pub oracle: PolicyReport,
    /// Policy mean speedup over oracle mean speedup, aligned with `runs`.
    pub oracle_capture: Vec<f64>,
}

impl Comparison {
    pub fn reports(&self) -> impl Iterator<Item = &PolicyReport> {
        self.runs.iter().map(|r| &r.report)
    }
}

pub fn compare_policies(
    trace: &[RequestDescriptor],
    policies: &[&dyn RoutingPolicy],
    table: &ProfileTable,
    options: &SimOptions,
) -> Result<Comparison> {
    if policies.is_empty() {
        return Err(Error::Config("compare needs at least one policy".into()));
    }
    let oracle_modes = oracle_modes(trace, table, options)?;
    let oracle_policy =
        OraclePolicy::controller(table.clone(), options.constraints, options.classifier);
    let oracle = run_policy_with_oracle(trace, &oracle_policy, table, options, &oracle_modes)?.report;
    let runs = policies
        .iter()
        .map(|p| run_policy_with_oracle(trace, *p, table, options, &oracle_modes))
        .collect::<Result<Vec<_>>>()?;
    let oracle_capture = runs
        .iter()
        .map(|r| r.report.mean_speedup / oracle.mean_speedup)
        .collect();
    Ok(Comparison {
        runs,
        oracle,
        oracle_capture,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateFailure {
    pub policy: String,
    pub family: WorkloadFamily,
    pub mean_quality_delta_pp: f64,
}

/// Benchmark families whose mean quality delta falls below `floor_pp`.
pub fn quality_gate(report: &PolicyReport, floor_pp: f64) -> Vec<GateFailure> {
    report
        .per_family
        .iter()
        .filter(|f| f.family.is_benchmark() && f.mean_quality_delta_pp < floor_pp)
        .map(|f| GateFailure {
            policy: report.policy.clone(),
            family: f.family,
            mean_quality_delta_pp: f.mean_quality_delta_pp,
        })
        .collect()
}

//! Shared vocabulary: requests, workload families, inference modes,
//! workload classes and per-request metric records.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eleven evaluation families: four synthetic shapes, two
/// deployment-style patterns and five scored benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WorkloadFamily {
    SyntheticSS,
    SyntheticSL,
    SyntheticLS,
    SyntheticLL,
    SharedPrefixChat,
    MemoryPressureLongContext,
    MMLUPro,
    GSM8K,
    TruthfulQA,
    GPQA,
    MLU,
}

/// How a benchmark family scores answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Generation,
    Choice,
}

impl EvalMode {
    pub fn code(self) -> i32 {
        match self {
            EvalMode::Generation => 0,
            EvalMode::Choice => 1,
        }
    }
}

impl WorkloadFamily {
    pub const ALL: [WorkloadFamily; 11] = [
        WorkloadFamily::SyntheticSS,
        WorkloadFamily::SyntheticSL,
        WorkloadFamily::SyntheticLS,
        WorkloadFamily::SyntheticLL,
        WorkloadFamily::SharedPrefixChat,
        WorkloadFamily::MemoryPressureLongContext,
        WorkloadFamily::MMLUPro,
        WorkloadFamily::GSM8K,
        WorkloadFamily::TruthfulQA,
        WorkloadFamily::GPQA,
        WorkloadFamily::MLU,
    ];

    pub const BENCHMARKS: [WorkloadFamily; 5] = [
        WorkloadFamily::MMLUPro,
        WorkloadFamily::GSM8K,
        WorkloadFamily::TruthfulQA,
        WorkloadFamily::GPQA,
        WorkloadFamily::MLU,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            WorkloadFamily::SyntheticSS => "SyntheticSS",
            WorkloadFamily::SyntheticSL => "SyntheticSL",
            WorkloadFamily::SyntheticLS => "SyntheticLS",
            WorkloadFamily::SyntheticLL => "SyntheticLL",
            WorkloadFamily::SharedPrefixChat => "SharedPrefixChat",
            WorkloadFamily::MemoryPressureLongContext => "MemoryPressureLongContext",
            WorkloadFamily::MMLUPro => "MMLUPro",
            WorkloadFamily::GSM8K => "GSM8K",
            WorkloadFamily::TruthfulQA => "TruthfulQA",
            WorkloadFamily::GPQA => "GPQA",
            WorkloadFamily::MLU => "MLU",
        }
    }

    pub fn is_benchmark(self) -> bool {
        self.benchmark_index().is_some()
    }

    /// Position within [`WorkloadFamily::BENCHMARKS`], if this is a benchmark family.
    pub fn benchmark_index(self) -> Option<usize> {
        Self::BENCHMARKS.iter().position(|f| *f == self)
    }

    /// Scoring mode; non-benchmark families are generation workloads.
    pub fn eval_mode(self) -> EvalMode {
        match self {
            WorkloadFamily::MMLUPro
            | WorkloadFamily::TruthfulQA
            | WorkloadFamily::GPQA
            | WorkloadFamily::MLU => EvalMode::Choice,
            _ => EvalMode::Generation,
        }
    }
}

impl fmt::Display for WorkloadFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkloadFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WorkloadFamily::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown workload family `{s}`")))
    }
}

/// A fixed serving configuration applied to a whole request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InferenceMode {
    FP16,
    INT8,
    GPTQ4,
    AWQ4,
    SpeculativeDecoding,
    PrefixCaching,
    ChunkedPrefill,
    ContinuousBatching,
    CudaGraphs,
    KVCacheCompression,
    GPTQPlusPrefixCaching,
    INT8PlusContinuousBatching,
}

impl InferenceMode {
    pub const ALL: [InferenceMode; 12] = [
        InferenceMode::FP16,
        InferenceMode::INT8,
        InferenceMode::GPTQ4,
        InferenceMode::AWQ4,
        InferenceMode::SpeculativeDecoding,
        InferenceMode::PrefixCaching,
        InferenceMode::ChunkedPrefill,
        InferenceMode::ContinuousBatching,
        InferenceMode::CudaGraphs,
        InferenceMode::KVCacheCompression,
        InferenceMode::GPTQPlusPrefixCaching,
        InferenceMode::INT8PlusContinuousBatching,
    ];

    /// Modes the online controller may route to (FP16 is the emergency fallback).
    pub const CONTROLLER_CANDIDATES: [InferenceMode; 6] = [
        InferenceMode::GPTQ4,
        InferenceMode::SpeculativeDecoding,
        InferenceMode::GPTQPlusPrefixCaching,
        InferenceMode::INT8PlusContinuousBatching,
        InferenceMode::INT8,
        InferenceMode::FP16,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            InferenceMode::FP16 => "FP16",
            InferenceMode::INT8 => "INT8",
            InferenceMode::GPTQ4 => "GPTQ4",
            InferenceMode::AWQ4 => "AWQ4",
            InferenceMode::SpeculativeDecoding => "SpeculativeDecoding",
            InferenceMode::PrefixCaching => "PrefixCaching",
            InferenceMode::ChunkedPrefill => "ChunkedPrefill",
            InferenceMode::ContinuousBatching => "ContinuousBatching",
            InferenceMode::CudaGraphs => "CudaGraphs",
            InferenceMode::KVCacheCompression => "KVCacheCompression",
            InferenceMode::GPTQPlusPrefixCaching => "GPTQPlusPrefixCaching",
            InferenceMode::INT8PlusContinuousBatching => "INT8PlusContinuousBatching",
        }
    }
}

impl fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InferenceMode::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown inference mode `{s}`")))
    }
}

/// Dominant bottleneck estimated for a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkloadClass {
    Batched,
    SharedPrefix,
    MemoryPressure,
    PrefillHeavy,
    DecodeHeavy,
    Balanced,
}

/// One incoming request's routable features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestDescriptor {
    pub request_id: String,
    pub prompt_tokens: u32,
    pub expected_output_tokens: u32,
    pub shared_prefix: bool,
    pub memory_pressure: bool,
    pub batch_pressure: u32,
    pub workload_tag: Option<WorkloadFamily>,
}

impl RequestDescriptor {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| Error::InvalidRequest {
            request_id: self.request_id.clone(),
            reason: reason.to_string(),
        };
        if self.request_id.is_empty() {
            return Err(fail("empty request_id"));
        }
        if self.prompt_tokens < 1 {
            return Err(fail("prompt_tokens must be >= 1"));
        }
        if self.expected_output_tokens < 1 {
            return Err(fail("expected_output_tokens must be >= 1"));
        }
        if self.batch_pressure < 1 {
            return Err(fail("batch_pressure must be >= 1"));
        }
        Ok(())
    }

    pub fn is_batched(&self) -> bool {
        self.batch_pressure > 1
    }
}

/// Simulated per-request metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestMetrics {
    pub latency_ms: f64,
    pub energy_per_token_j: f64,
    pub throughput_tps: f64,
    pub memory_ratio: f64,
    pub quality_delta_pp: f64,
    pub routing_overhead_ms: f64,
}

/// Output tokens divided by latency.
pub fn throughput_tps(output_tokens: u32, latency_ms: f64) -> f64 {
    f64::from(output_tokens) / (latency_ms / 1000.0)
}

/// FP16 latency divided by mode latency.
pub fn speedup(fp16_latency_ms: f64, mode_latency_ms: f64) -> Result<f64> {
    if !(fp16_latency_ms > 0.0) || !(mode_latency_ms > 0.0) {
        return Err(Error::Domain(format!(
            "speedup needs positive latencies, got {fp16_latency_ms} and {mode_latency_ms}"
        )));
    }
    Ok(fp16_latency_ms / mode_latency_ms)
}

/// Mode value divided by the FP16 value (energy and memory ratios).
pub fn ratio_vs_baseline(mode_value: f64, fp16_value: f64) -> Result<f64> {
    if !(fp16_value > 0.0) {
        return Err(Error::Domain(format!(
            "baseline value must be positive, got {fp16_value}"
        )));
    }
    if !(mode_value >= 0.0) {
        return Err(Error::Domain(format!(
            "mode value must be non-negative, got {mode_value}"
        )));
    }
    Ok(mode_value / fp16_value)
}

/// Reads a line-delimited JSON trace. Blank lines are skipped; every
/// descriptor is validated and ids must be unique.
pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<RequestDescriptor>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace(BufReader::new(file), &path.display().to_string())
}

pub fn parse_trace(reader: impl BufRead, origin: &str) -> Result<Vec<RequestDescriptor>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let req: RequestDescriptor = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{origin}:{}", lineno + 1), e))?;
        req.validate()?;
        if !seen.insert(req.request_id.clone()) {
            return Err(Error::DuplicateRequestId(req.request_id));
        }
        out.push(req);
    }
    Ok(out)
}

pub fn write_trace(path: impl AsRef<Path>, trace: &[RequestDescriptor]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_trace_to(&mut w, trace).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trace_to(w: &mut impl Write, trace: &[RequestDescriptor]) -> std::io::Result<()> {
    for req in trace {
        let line = serde_json::to_string(req).map_err(std::io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speedup_reference_anchors() {
        assert!((speedup(1903.0, 942.0).unwrap() - 2.020_169_851).abs() < 1e-6);
        assert_eq!(speedup(100.0, 100.0).unwrap(), 1.0);
        assert!((speedup(1840.0, 1361.0).unwrap() - 1.351_947_097).abs() < 1e-6);
    }

    #[test]
    fn speedup_rejects_non_positive() {
        assert!(speedup(0.0, 1.0).is_err());
        assert!(speedup(1.0, -2.0).is_err());
        assert!(speedup(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn ratio_examples() {
        assert!((ratio_vs_baseline(1.36, 3.26).unwrap() - 0.417_177_914).abs() < 1e-6);
        assert_eq!(ratio_vs_baseline(0.0, 5.0).unwrap(), 0.0);
        assert!((ratio_vs_baseline(0.83, 1.32).unwrap() - 0.628_787_878).abs() < 1e-6);
        assert!(ratio_vs_baseline(1.0, 0.0).is_err());
    }

    #[test]
    fn enums_round_trip_through_json_and_from_str() {
        for fam in WorkloadFamily::ALL {
            let s = serde_json::to_string(&fam).unwrap();
            assert_eq!(s, format!("\"{}\"", fam.name()));
            assert_eq!(serde_json::from_str::<WorkloadFamily>(&s).unwrap(), fam);
            assert_eq!(fam.name().parse::<WorkloadFamily>().unwrap(), fam);
        }
        for mode in InferenceMode::ALL {
            let s = serde_json::to_string(&mode).unwrap();
            assert_eq!(serde_json::from_str::<InferenceMode>(&s).unwrap(), mode);
            assert_eq!(mode.name().to_lowercase().parse::<InferenceMode>().unwrap(), mode);
        }
        for (i, fam) in WorkloadFamily::ALL.iter().enumerate() {
            assert_eq!(fam.index(), i);
        }
    }

    #[test]
    fn trace_parsing_checks_fields_and_ids() {
        let good = r#"{"request_id":"a","prompt_tokens":128,"expected_output_tokens":32,"shared_prefix":false,"memory_pressure":false,"batch_pressure":1,"workload_tag":"SyntheticSS"}
{"request_id":"b","prompt_tokens":10,"expected_output_tokens":5,"shared_prefix":true,"memory_pressure":false,"batch_pressure":2,"workload_tag":null}
"#;
        let trace = parse_trace(good.as_bytes(), "mem").unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace[1].workload_tag, None);

        let dup = good.replace("\"b\"", "\"a\"");
        assert!(matches!(
            parse_trace(dup.as_bytes(), "mem"),
            Err(Error::DuplicateRequestId(_))
        ));

        let zero = good.replace("\"prompt_tokens\":10", "\"prompt_tokens\":0");
        assert!(matches!(
            parse_trace(zero.as_bytes(), "mem"),
            Err(Error::InvalidRequest { .. })
        ));

        let extra = good.replace("\"batch_pressure\":1,", "\"batch_pressure\":1,\"x\":1,");
        assert!(parse_trace(extra.as_bytes(), "mem").is_err());
    }

    #[test]
    fn eval_modes() {
        assert_eq!(WorkloadFamily::GSM8K.eval_mode(), EvalMode::Generation);
        assert_eq!(WorkloadFamily::MMLUPro.eval_mode(), EvalMode::Choice);
        assert_eq!(WorkloadFamily::SyntheticSS.eval_mode(), EvalMode::Generation);
        assert!(WorkloadFamily::MLU.is_benchmark());
        assert!(!WorkloadFamily::SharedPrefixChat.is_benchmark());
    }
}

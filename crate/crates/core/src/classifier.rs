//! Request-time feature extraction and threshold-based workload classification.

use serde::{Deserialize, Serialize};

use crate::domain::{RequestDescriptor, WorkloadClass, WorkloadFamily};
use crate::error::{Error, Result};

/// Static request features, also the input space of the learned routers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureVector {
    pub prompt_tokens: u32,
    pub expected_output_tokens: u32,
    pub shared_prefix: u8,
    pub memory_pressure: u8,
    pub batch_pressure: u32,
    pub workload_tag_code: i32,
    pub output_to_prompt_ratio: f64,
    pub benchmark_family_code: i32,
    pub eval_mode_code: i32,
}

impl FeatureVector {
    pub const LEN: usize = 9;

    pub const NAMES: [&'static str; Self::LEN] = [
        "prompt_tokens",
        "expected_output_tokens",
        "shared_prefix",
        "memory_pressure",
        "batch_pressure",
        "workload_tag_code",
        "output_to_prompt_ratio",
        "benchmark_family_code",
        "eval_mode_code",
    ];

    /// Dense numeric form in [`FeatureVector::NAMES`] order.
    pub fn to_array(&self) -> [f64; Self::LEN] {
        [
            f64::from(self.prompt_tokens),
            f64::from(self.expected_output_tokens),
            f64::from(self.shared_prefix),
            f64::from(self.memory_pressure),
            f64::from(self.batch_pressure),
            f64::from(self.workload_tag_code),
            self.output_to_prompt_ratio,
            f64::from(self.benchmark_family_code),
            f64::from(self.eval_mode_code),
        ]
    }

    pub fn workload_tag(&self) -> Option<WorkloadFamily> {
        usize::try_from(self.workload_tag_code)
            .ok()
            .and_then(|i| WorkloadFamily::ALL.get(i).copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub long_prompt_threshold: u32,
    pub long_output_threshold: u32,
    pub decode_heavy_ratio: f64,
    pub batch_threshold: u32,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            long_prompt_threshold: 512,
            long_output_threshold: 64,
            decode_heavy_ratio: 0.5,
            batch_threshold: 2,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.long_prompt_threshold < 1
            || self.long_output_threshold < 1
            || self.batch_threshold < 1
        {
            return Err(Error::Config("classifier thresholds must be >= 1".into()));
        }
        if !(self.decode_heavy_ratio > 0.0) {
            return Err(Error::Config("decode_heavy_ratio must be positive".into()));
        }
        Ok(())
    }
}

pub fn extract_features(request: &RequestDescriptor) -> FeatureVector {
    let tag = request.workload_tag;
    FeatureVector {
        prompt_tokens: request.prompt_tokens,
        expected_output_tokens: request.expected_output_tokens,
        shared_prefix: u8::from(request.shared_prefix),
        memory_pressure: u8::from(request.memory_pressure),
        batch_pressure: request.batch_pressure,
        workload_tag_code: tag.map_or(-1, |f| f.index() as i32),
        output_to_prompt_ratio: f64::from(request.expected_output_tokens)
            / f64::from(request.prompt_tokens),
        benchmark_family_code: tag
            .and_then(WorkloadFamily::benchmark_index)
            .map_or(-1, |i| i as i32),
        eval_mode_code: tag.map_or(0, |f| f.eval_mode().code()),
    }
}

/// Precedence: Batched > SharedPrefix > MemoryPressure > DecodeHeavy >
/// PrefillHeavy > Balanced.
pub fn classify(features: &FeatureVector, config: &ClassifierConfig) -> WorkloadClass {
    let long_prompt = features.prompt_tokens >= config.long_prompt_threshold;
    let long_output = features.expected_output_tokens >= config.long_output_threshold;

    if features.batch_pressure >= config.batch_threshold {
        WorkloadClass::Batched
    } else if features.shared_prefix != 0 {
        WorkloadClass::SharedPrefix
    } else if features.memory_pressure != 0 {
        WorkloadClass::MemoryPressure
    } else if long_output
        && (features.output_to_prompt_ratio >= config.decode_heavy_ratio || !long_prompt)
    {
        WorkloadClass::DecodeHeavy
    } else if long_prompt && !long_output {
        WorkloadClass::PrefillHeavy
    } else {
        WorkloadClass::Balanced
    }
}

/// Profile family for a request: its tag, or for untagged traffic the
/// family whose shape it resembles.
pub fn resolve_family(request: &RequestDescriptor, config: &ClassifierConfig) -> WorkloadFamily {
    if let Some(tag) = request.workload_tag {
        return tag;
    }
    if request.shared_prefix {
        return WorkloadFamily::SharedPrefixChat;
    }
    if request.memory_pressure {
        return WorkloadFamily::MemoryPressureLongContext;
    }
    let long_prompt = request.prompt_tokens >= config.long_prompt_threshold;
    let long_output = request.expected_output_tokens >= config.long_output_threshold;
    match (long_prompt, long_output) {
        (false, false) => WorkloadFamily::SyntheticSS,
        (false, true) => WorkloadFamily::SyntheticSL,
        (true, false) => WorkloadFamily::SyntheticLS,
        (true, true) => WorkloadFamily::SyntheticLL,
    }
}

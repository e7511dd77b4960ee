//! Mode performance profiles: the measured per-(mode, family) speedup,
//! energy ratio, memory ratio, quality delta and feasibility that drive
//! simulation and the oracle.
//!
//! Cells are keyed by `(mode, family, batched)`. A batched cell only
//! applies to requests with `batch_pressure > 1`; batched lookups fall back
//! to the unbatched cell of the same mode and family, so batching-specific
//! modes (INT8 plus continuous batching) can be profiled for multi-request
//! serving without implying anything about single requests.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{InferenceMode, RequestDescriptor, WorkloadFamily};
use crate::error::{Error, Result};

/// Shipped default profile.
pub const DEFAULT_PROFILE_JSON: &str = include_str!("../profiles/default.json");

/// Relative tolerance for `latency × throughput ≈ tokens` on annotated cells.
pub const ANCHOR_TOKEN_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    PaperMeasured,
    Synthesized,
}

/// Absolute measurement that a cell was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuredAnchor {
    pub latency_ms: f64,
    pub throughput_tps: f64,
    pub output_tokens: u32,
}

impl MeasuredAnchor {
    /// `latency × throughput`, the token count implied by the two measurements.
    pub fn implied_tokens(&self) -> f64 {
        self.latency_ms / 1000.0 * self.throughput_tps
    }

    pub fn relative_token_error(&self) -> f64 {
        let tokens = f64::from(self.output_tokens);
        (self.implied_tokens() - tokens).abs() / tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeProfileCell {
    pub mode: InferenceMode,
    pub family: WorkloadFamily,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub batched: bool,
    pub latency_speedup: f64,
    pub energy_ratio: f64,
    pub memory_ratio: f64,
    pub quality_delta_pp: f64,
    pub feasible: bool,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured: Option<MeasuredAnchor>,
}

impl ModeProfileCell {
    pub fn fp16_identity(family: WorkloadFamily) -> Self {
        ModeProfileCell {
            mode: InferenceMode::FP16,
            family,
            batched: false,
            latency_speedup: 1.0,
            energy_ratio: 1.0,
            memory_ratio: 1.0,
            quality_delta_pp: 0.0,
            feasible: true,
            provenance: Provenance::PaperMeasured,
            measured: None,
        }
    }

    pub fn key(&self) -> CellKey {
        CellKey {
            mode: self.mode,
            family: self.family,
            batched: self.batched,
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::ProfileCell {
            mode: self.mode,
            family: self.family,
            reason,
        };
        for (name, v) in [
            ("latency_speedup", self.latency_speedup),
            ("energy_ratio", self.energy_ratio),
            ("memory_ratio", self.memory_ratio),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(fail(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !self.quality_delta_pp.is_finite() {
            return Err(fail("quality_delta_pp must be finite".into()));
        }
        if self.mode == InferenceMode::FP16 {
            let identity = self.latency_speedup == 1.0
                && self.energy_ratio == 1.0
                && self.memory_ratio == 1.0
                && self.quality_delta_pp == 0.0
                && self.feasible;
            if !identity {
                return Err(fail(
                    "FP16 cells must be the identity (1.0, 1.0, 1.0, 0.0, feasible)".into(),
                ));
            }
        }
        if let Some(anchor) = self.measured {
            if !(anchor.latency_ms > 0.0) || !(anchor.throughput_tps > 0.0) {
                return Err(fail("measured latency and throughput must be positive".into()));
            }
            if anchor.output_tokens == 0 {
                return Err(fail("measured output_tokens must be >= 1".into()));
            }
            let err = anchor.relative_token_error();
            if err > ANCHOR_TOKEN_TOLERANCE {
                return Err(fail(format!(
                    "latency x throughput = {:.2} tokens, expected {} (relative error {err:.4})",
                    anchor.implied_tokens(),
                    anchor.output_tokens
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub mode: InferenceMode,
    pub family: WorkloadFamily,
    pub batched: bool,
}

/// Converts token counts into an FP16 baseline latency, energy and memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineCostModel {
    pub prefill_ms_per_token: f64,
    pub decode_ms_per_token: f64,
    pub fixed_overhead_ms: f64,
    pub fp16_energy_j_per_token: f64,
    pub fp16_peak_memory_mb: f64,
}

impl Default for BaselineCostModel {
    fn default() -> Self {
        BaselineCostModel {
            prefill_ms_per_token: 0.5,
            decode_ms_per_token: 10.7,
            fixed_overhead_ms: 20.0,
            fp16_energy_j_per_token: 3.0,
            fp16_peak_memory_mb: 16_500.0,
        }
    }
}

impl BaselineCostModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("prefill_ms_per_token", self.prefill_ms_per_token),
            ("decode_ms_per_token", self.decode_ms_per_token),
            ("fp16_energy_j_per_token", self.fp16_energy_j_per_token),
            ("fp16_peak_memory_mb", self.fp16_peak_memory_mb),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Profile(format!(
                    "baseline_costs.{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.fixed_overhead_ms >= 0.0) || !self.fixed_overhead_ms.is_finite() {
            return Err(Error::Profile(format!(
                "baseline_costs.fixed_overhead_ms must be non-negative, got {}",
                self.fixed_overhead_ms
            )));
        }
        Ok(())
    }

    /// Total energy of a request served in FP16-equivalent terms scaled by `energy_ratio`.
    pub fn request_energy_j(&self, energy_ratio: f64, output_tokens: u32) -> f64 {
        self.fp16_energy_j_per_token * energy_ratio * f64::from(output_tokens)
    }
}

/// FP16 latency of a request under the cost model.
pub fn fp16_latency(costs: &BaselineCostModel, request: &RequestDescriptor) -> f64 {
    costs.fixed_overhead_ms
        + costs.prefill_ms_per_token * f64::from(request.prompt_tokens)
        + costs.decode_ms_per_token * f64::from(request.expected_output_tokens)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    baseline_costs: BaselineCostModel,
    cells: Vec<ModeProfileCell>,
}

/// Validated, immutable profile table.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    cells: BTreeMap<CellKey, ModeProfileCell>,
    baseline_costs: BaselineCostModel,
}

impl ProfileTable {
    /// Builds and validates a table from loose cells.
    pub fn new(baseline_costs: BaselineCostModel, cells: Vec<ModeProfileCell>) -> Result<Self> {
        baseline_costs.validate()?;
        let mut map = BTreeMap::new();
        for cell in cells {
            cell.validate()?;
            if map.insert(cell.key(), cell).is_some() {
                return Err(Error::ProfileCell {
                    mode: cell.mode,
                    family: cell.family,
                    reason: "duplicate cell".into(),
                });
            }
        }
        let families: BTreeSet<WorkloadFamily> = map.keys().map(|k| k.family).collect();
        for family in families {
            let key = CellKey {
                mode: InferenceMode::FP16,
                family,
                batched: false,
            };
            if !map.contains_key(&key) {
                return Err(Error::ProfileCell {
                    mode: InferenceMode::FP16,
                    family,
                    reason: "missing FP16 baseline cell".into(),
                });
            }
        }
        Ok(ProfileTable {
            cells: map,
            baseline_costs,
        })
    }

    pub fn shipped_default() -> Self {
        Self::from_json_str(DEFAULT_PROFILE_JSON).expect("shipped default profile is valid")
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let file: ProfileFile =
            serde_json::from_str(json).map_err(|e| Error::json("profile", e))?;
        Self::new(file.baseline_costs, file.cells)
    }

    pub fn to_json_string(&self) -> String {
        let file = ProfileFile {
            baseline_costs: self.baseline_costs,
            cells: self.cells.values().copied().collect(),
        };
        serde_json::to_string_pretty(&file).expect("profile serializes")
    }

    pub fn baseline_costs(&self) -> &BaselineCostModel {
        &self.baseline_costs
    }

    pub fn cells(&self) -> impl Iterator<Item = &ModeProfileCell> {
        self.cells.values()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn families(&self) -> BTreeSet<WorkloadFamily> {
        self.cells.keys().map(|k| k.family).collect()
    }

    /// Single-request cell for `(mode, family)`.
    pub fn lookup(&self, mode: InferenceMode, family: WorkloadFamily) -> Result<&ModeProfileCell> {
        self.lookup_context(mode, family, false)
    }

    /// Cell for a request context. Batched requests prefer a batched cell and
    /// otherwise use the single-request cell.
    pub fn lookup_context(
        &self,
        mode: InferenceMode,
        family: WorkloadFamily,
        batched: bool,
    ) -> Result<&ModeProfileCell> {
        let unbatched = CellKey {
            mode,
            family,
            batched: false,
        };
        let found = if batched {
            self.cells
                .get(&CellKey { batched: true, ..unbatched })
                .or_else(|| self.cells.get(&unbatched))
        } else {
            self.cells.get(&unbatched)
        };
        found.ok_or(Error::MissingCell {
            mode,
            family,
            batched,
        })
    }

    /// Usable means present and feasible.
    pub fn is_usable(&self, mode: InferenceMode, family: WorkloadFamily, batched: bool) -> bool {
        self.lookup_context(mode, family, batched)
            .map(|c| c.feasible)
            .unwrap_or(false)
    }
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<ProfileTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ProfileTable::from_json_str(&text)
}

pub fn save_profile(path: impl AsRef<Path>, table: &ProfileTable) -> Result<()> {
    let path = path.as_ref();
    let mut text = table.to_json_string();
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

//! CSV and markdown report emission, plus readers for the CSVs so outputs
//! can be checked by round trip.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{InferenceMode, WorkloadFamily};
use crate::error::{Error, Result};
use crate::learned::{ConfusionMatrix, CLASSES, N_CLASSES};
use crate::sim::{Comparison, PolicyReport, SimRequestResult};

/// One row per policy: every scalar of a [`PolicyReport`] plus oracle capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub n_requests: usize,
    pub mean_speedup: f64,
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
    pub oracle_capture: f64,
    /// Held-out confusion-matrix accuracy for learned policies, empty otherwise.
    pub model_accuracy: Option<f64>,
}

impl ComparisonRow {
    pub fn new(r: &PolicyReport, oracle_capture: f64, model_accuracy: Option<f64>) -> Self {
        ComparisonRow {
            policy: r.policy.clone(),
            n_requests: r.n_requests,
            mean_speedup: r.mean_speedup,
            ratio_of_means_speedup: r.ratio_of_means_speedup,
            mean_energy_ratio: r.mean_energy_ratio,
            mean_memory_ratio: r.mean_memory_ratio,
            mean_quality_delta_pp: r.mean_quality_delta_pp,
            collapsed_mean_speedup: r.collapsed_mean_speedup,
            collapsed_mean_energy_ratio: r.collapsed_mean_energy_ratio,
            oracle_match_rate: r.oracle_match_rate,
            constraint_violation_rate: r.constraint_violation_rate,
            mean_overhead_ms: r.mean_overhead_ms,
            synthesized_cell_usage: r.synthesized_cell_usage,
            fallback_rate: r.fallback_rate,
            oracle_capture,
            model_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub policy: String,
    pub family: WorkloadFamily,
    pub n_requests: usize,
    pub mean_speedup: f64,
    pub mean_energy_ratio: f64,
    pub mean_memory_ratio: f64,
    pub mean_quality_delta_pp: f64,
    pub constraint_violation_rate: f64,
}

pub fn family_rows(report: &PolicyReport) -> Vec<FamilyRow> {
    report
        .per_family
        .iter()
        .map(|f| FamilyRow {
            policy: report.policy.clone(),
            family: f.family,
            n_requests: f.n_requests,
            mean_speedup: f.mean_speedup,
            mean_energy_ratio: f.mean_energy_ratio,
            mean_memory_ratio: f.mean_memory_ratio,
            mean_quality_delta_pp: f.mean_quality_delta_pp,
            constraint_violation_rate: f.constraint_violation_rate,
        })
        .collect()
}

/// Flat per-request record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRow {
    pub request_id: String,
    pub family: WorkloadFamily,
    pub routed_mode: InferenceMode,
    pub served_mode: InferenceMode,
    pub reason: String,
    pub overhead_ms: f64,
    pub fp16_latency_ms: f64,
    pub mode_latency_ms: f64,
    pub speedup: f64,
    pub energy_ratio: f64,
    pub memory_ratio: f64,
    pub quality_delta_pp: f64,
    pub constraint_violated: bool,
    pub provenance_flag: bool,
    pub fallback: bool,
}

impl From<&SimRequestResult> for RequestRow {
    fn from(r: &SimRequestResult) -> Self {
        RequestRow {
            request_id: r.request_id.clone(),
            family: r.family,
            routed_mode: r.decision.mode,
            served_mode: r.served_mode,
            reason: format!("{:?}", r.decision.reason),
            overhead_ms: r.decision.overhead_ms,
            fp16_latency_ms: r.fp16_latency_ms,
            mode_latency_ms: r.mode_latency_ms,
            speedup: r.speedup,
            energy_ratio: r.energy_ratio,
            memory_ratio: r.memory_ratio,
            quality_delta_pp: r.quality_delta_pp,
            constraint_violated: r.constraint_violated,
            provenance_flag: r.provenance_flag,
            fallback: r.simulator_fallback || r.decision.emergency_fallback,
        }
    }
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(&ctx, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(&ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(|e| Error::csv(&ctx, e)))
        .collect()
}

/// 5x5 matrix with a header row of predicted classes and a leading column
/// of true classes.
pub fn write_confusion_csv(path: impl AsRef<Path>, m: &ConfusionMatrix) -> Result<()> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(&ctx, e))?;
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(CLASSES.iter().map(|c| c.to_string()));
    w.write_record(&header).map_err(|e| Error::csv(&ctx, e))?;
    for (i, class) in CLASSES.iter().enumerate() {
        let mut rec = vec![class.to_string()];
        rec.extend(m.counts[i].iter().map(|c| c.to_string()));
        w.write_record(&rec).map_err(|e| Error::csv(&ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_confusion_csv(path: impl AsRef<Path>) -> Result<ConfusionMatrix> {
    let path = path.as_ref();
    let ctx = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let bad = |msg: String| Error::Domain(format!("{ctx}: {msg}"));
    let header = r.headers().map_err(|e| Error::csv(&ctx, e))?.clone();
    for (j, class) in CLASSES.iter().enumerate() {
        let name = header.get(j + 1).unwrap_or("");
        if name.parse::<InferenceMode>().ok() != Some(*class) {
            return Err(bad(format!("column {} should be {class}", j + 1)));
        }
    }
    let mut counts = [[0usize; N_CLASSES]; N_CLASSES];
    let mut n_rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(&ctx, e))?;
        if i >= N_CLASSES || rec.get(0).and_then(|s| s.parse().ok()) != Some(CLASSES[i]) {
            return Err(bad(format!("unexpected row {}", i + 1)));
        }
        for j in 0..N_CLASSES {
            counts[i][j] = rec
                .get(j + 1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("bad count at row {}", i + 1)))?;
        }
        n_rows += 1;
    }
    if n_rows != N_CLASSES {
        return Err(bad(format!("expected {N_CLASSES} rows, found {n_rows}")));
    }
    Ok(ConfusionMatrix { counts })
}

/// Markdown table in the layout of a policy summary, followed by notes.
pub fn summary_markdown(rows: &[ComparisonRow], notes: &[String]) -> String {
    let mut s = String::new();
    s.push_str("| Policy | Speedup | Collapsed speedup | Energy ratio | Quality delta (pp) | Oracle match | Violations | Overhead (ms) | Oracle capture |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {:.3}x | {:.3}x | {:.3} | {:+.2} | {:.1}% | {:.1}% | {:.4} | {:.3} |",
            r.policy,
            r.mean_speedup,
            r.collapsed_mean_speedup,
            r.mean_energy_ratio,
            r.mean_quality_delta_pp,
            100.0 * r.oracle_match_rate,
            100.0 * r.constraint_violation_rate,
            r.mean_overhead_ms,
            r.oracle_capture,
        );
    }
    if !notes.is_empty() {
        s.push('\n');
        for n in notes {
            let _ = writeln!(s, "- {n}");
        }
    }
    s
}

/// Rows for every compared policy, followed by the oracle row unless the
/// oracle was one of them.
pub fn comparison_rows(cmp: &Comparison, accuracies: &[Option<f64>]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = cmp
        .runs
        .iter()
        .zip(&cmp.oracle_capture)
        .enumerate()
        .map(|(i, (run, &cap))| {
            ComparisonRow::new(&run.report, cap, accuracies.get(i).copied().flatten())
        })
        .collect();
    if !rows.iter().any(|r| r.policy == cmp.oracle.policy) {
        rows.push(ComparisonRow::new(&cmp.oracle, 1.0, None));
    }
    rows
}

//! The machine-readable output contract: one JSON report shape for index
//! and ranking commands, a correction report for `correct-check`, and the
//! structured error payload written to stderr on failure. Serialization
//! is deterministic — field order is fixed, floats print in shortest
//! round-trip form, and no timestamps or environment details are included
//! — so identical inputs yield byte-identical output.

use ambit_core::indices::{IndexBackend, IndexResult};
use serde::Serialize;

/// Top-level report:
/// `{"qoi_mean", "indices": [...], "diagnostics": {...}}`.
#[derive(Debug, Serialize)]
pub struct Report {
    pub qoi_mean: f64,
    pub indices: Vec<IndexRow>,
    pub diagnostics: Diagnostics,
}

/// One perturbation target. `vertex` is the vertex name, or `"model"` for
/// the whole-model row of `index`. `share` is this row's fraction of the
/// summed worst-case increase across the report (1 for single-row reports
/// with a nonzero index, 0 when everything is zero).
#[derive(Debug, Clone, Serialize)]
pub struct IndexRow {
    pub vertex: String,
    pub eta: f64,
    pub i_plus: f64,
    pub i_minus: f64,
    pub tight: bool,
    pub backend: String,
    pub share: f64,
}

#[derive(Debug, Default, Serialize)]
pub struct Diagnostics {
    /// Model source: a file path or a preset name.
    pub model: String,
    /// How the QoI was chosen (field from the document, flag, or preset
    /// default).
    pub qoi: String,
    pub seed: u64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assessment: Option<AssessmentOut>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FailureOut>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Outcome of a `--tol` check.
#[derive(Debug, Serialize)]
pub struct AssessmentOut {
    pub measured: f64,
    pub tolerance: f64,
    pub mode: String,
    pub pass: bool,
}

/// A vertex whose index computation failed; the rest of the report stands.
#[derive(Debug, Serialize)]
pub struct FailureOut {
    pub vertex: String,
    pub error: String,
}

/// Report shape of `correct-check`.
#[derive(Debug, Serialize)]
pub struct CorrectionReport {
    /// `"gaussian-mean-zero"`, `"general-descendants"`, or `"no-change"`.
    pub case: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrected_vertex: Option<String>,
    /// Vertices whose indices carry over untouched.
    pub unchanged: Vec<String>,
    /// Vertices recomputed under the corrected model.
    pub recheck: Vec<RecheckRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrected: Option<RecheckRow>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Serialize)]
pub struct RecheckRow {
    pub vertex: String,
    pub eta: f64,
    pub before: IndexPair,
    pub after: IndexPair,
    /// Change of the worst-case increase; negative means the correction
    /// helped.
    pub delta: f64,
}

#[derive(Debug, Serialize)]
pub struct IndexPair {
    pub i_plus: f64,
    pub i_minus: f64,
    pub tight: bool,
    pub backend: String,
}

pub fn backend_name(backend: IndexBackend) -> &'static str {
    match backend {
        IndexBackend::GaussianClosedForm => "gaussian-closed-form",
        IndexBackend::ExhaustiveDiscrete => "exhaustive-discrete",
        IndexBackend::MonteCarlo => "monte-carlo",
        IndexBackend::Structural => "structural",
    }
}

impl IndexRow {
    pub fn from_index(vertex: String, eta: f64, index: &IndexResult, share: f64) -> Self {
        Self {
            vertex,
            eta,
            i_plus: index.worst_increase(),
            i_minus: index.worst_decrease(),
            tight: index.tight,
            backend: backend_name(index.backend).to_string(),
            share,
        }
    }
}

impl IndexPair {
    pub fn from_index(index: &IndexResult) -> Self {
        Self {
            i_plus: index.worst_increase(),
            i_minus: index.worst_decrease(),
            tight: index.tight,
            backend: backend_name(index.backend).to_string(),
        }
    }
}

/// Pretty JSON with a trailing newline; the canonical output form.
pub fn render_json<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("report types serialize");
    out.push('\n');
    out
}

/// The stderr payload for failed runs:
/// `{"error": {"kind": ..., "message": ...}}`.
pub fn error_json(kind: &str, message: &str) -> String {
    #[derive(Serialize)]
    struct Payload<'a> {
        error: Inner<'a>,
    }
    #[derive(Serialize)]
    struct Inner<'a> {
        kind: &'a str,
        message: &'a str,
    }
    render_json(&Payload { error: Inner { kind, message } })
}

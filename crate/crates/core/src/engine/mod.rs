//! The diagnosis workflow. Drills down from a slow query to its plan and
//! operators, then to the SAN components those operators depend on, and
//! rolls candidate causes back up to the share of the slowdown they explain.

mod config;
mod diagnose;
mod report;

pub use config::DiagnosisConfig;
pub use diagnose::diagnose;
pub use report::{explain_cause, render_report, ReportFormat};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{median, AnalyticsError, DegradationRecord};
use crate::ingest::{IngestError, RunRecord};
use crate::model::ModelError;
use crate::symptoms::{CauseLayer, EvidenceItem, PredicateMatch};

/// Version tag carried by every JSON report.
pub const REPORT_SCHEMA: &str = "diagnosis/1";

/// Id of the synthetic cause reported when the plan changed.
pub const PLAN_CHANGE_CAUSE: &str = "plan_change";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("need at least {needed} historical runs, found {found}")]
    InsufficientHistory { needed: usize, found: usize },
    #[error("run `{run_id}` of query `{query_id}` is not in the store")]
    UnknownRun { query_id: String, run_id: String },
    #[error("total slowdown must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowdownVerdict {
    pub query_id: String,
    pub baseline_median_s: f64,
    pub current_s: f64,
    pub rel_delta: f64,
    pub slowed: bool,
}

/// Compares the current total elapsed time against the median of the
/// history totals (any plan).
pub fn detect_slowdown(
    history: &[&RunRecord],
    current: &RunRecord,
    theta: f64,
    min_history: usize,
) -> Result<SlowdownVerdict, EngineError> {
    if history.len() < min_history {
        return Err(EngineError::InsufficientHistory {
            needed: min_history,
            found: history.len(),
        });
    }
    let totals: Vec<f64> = history.iter().map(|r| r.total_s()).collect();
    let baseline = median(&totals).expect("history is non-empty");
    let current_s = current.total_s();
    let rel_delta = (current_s - baseline) / baseline;
    Ok(SlowdownVerdict {
        query_id: current.query_id().to_string(),
        baseline_median_s: baseline,
        current_s,
        rel_delta,
        slowed: rel_delta >= theta,
    })
}

/// Share of the degraded operators' slowdown each cause explains.
///
/// A degraded operator's delta is attributed to every cause whose locus
/// intersects the operator's dependency closure, so impacts of different
/// causes may sum above 1. Each impact is capped at 1.
pub fn impact_rollup(
    degraded: &[DegradationRecord],
    closures: &BTreeMap<String, BTreeSet<String>>,
    loci: &BTreeMap<String, BTreeSet<String>>,
    total_delta_s: f64,
) -> Result<BTreeMap<String, f64>, EngineError> {
    if total_delta_s.is_nan() || total_delta_s <= 0.0 {
        return Err(EngineError::NonPositiveDelta(total_delta_s));
    }
    let empty = BTreeSet::new();
    Ok(loci
        .iter()
        .map(|(cause, locus)| {
            let explained: f64 = degraded
                .iter()
                .filter(|d| d.degraded)
                .filter(|d| {
                    let closure = closures.get(&d.op_id).unwrap_or(&empty);
                    !closure.is_disjoint(locus)
                })
                .map(|d| d.delta_s)
                .sum();
            (cause.clone(), (explained / total_delta_s).clamp(0.0, 1.0))
        })
        .collect())
}

/// How a ranked cause was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseTrace {
    /// Degraded operators whose dependencies intersect the locus.
    pub operators: Vec<String>,
    /// Components carrying the evidence.
    pub locus: Vec<String>,
    pub satisfied: Vec<PredicateMatch>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCause {
    pub cause_id: String,
    pub layer: CauseLayer,
    pub description: String,
    pub confidence: f64,
    pub impact: f64,
    pub rank_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fix: Option<String>,
    pub trace: CauseTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub schema: String,
    pub query_id: String,
    pub run_id: String,
    pub verdict: SlowdownVerdict,
    pub plan_changed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_fingerprint: Option<String>,
    pub current_fingerprint: String,
    pub degraded_operators: Vec<DegradationRecord>,
    pub candidate_nodes: Vec<String>,
    /// Ranked by `rank_score` descending, then `cause_id` ascending.
    pub causes: Vec<RankedCause>,
    /// Evidence on components no degraded operator depends on.
    pub suppressed_evidence: Vec<EvidenceItem>,
    pub notes: Vec<String>,
}

impl DiagnosisReport {
    pub fn top_cause(&self) -> Option<&str> {
        self.causes.first().map(|c| c.cause_id.as_str())
    }

    pub fn rank_of(&self, cause_id: &str) -> Option<usize> {
        self.causes.iter().position(|c| c.cause_id == cause_id)
    }
}

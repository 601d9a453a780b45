//! Synthetic testbed: generates runs, metrics and events for a scenario,
//! with faults injected at known times and ground truth recorded next to
//! the data.

mod builtin;
mod generate;
mod physics;

pub use builtin::{builtin_scenario, builtin_scenario_names};
pub use generate::{generate, Dataset, GroundTruth, GroundTruthRun};
pub use physics::{
    congested_port_utilization, contended_pool_utilization, latency_multiplier, NoiseModel,
    UTILIZATION_CAP,
};

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{IngestError, OperatorRecord, PlanSnapshot, TopologyDoc};
use crate::model::{build_apg, NodeKind};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("fault {kind} cannot target `{target}`: {reason}")]
    InconsistentFaultTarget {
        kind: FaultKind,
        target: String,
        reason: String,
    },
    #[error("output directory {0} already contains data")]
    OutputNotEmpty(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    LockContention,
    CpuSaturation,
    ControllerPortCongestion,
    VolumeContention,
    PlanChange,
    ZoningChange,
}

impl FaultKind {
    pub const ALL: [FaultKind; 6] = [
        FaultKind::LockContention,
        FaultKind::CpuSaturation,
        FaultKind::ControllerPortCongestion,
        FaultKind::VolumeContention,
        FaultKind::PlanChange,
        FaultKind::ZoningChange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::LockContention => "lock_contention",
            FaultKind::CpuSaturation => "cpu_saturation",
            FaultKind::ControllerPortCongestion => "controller_port_congestion",
            FaultKind::VolumeContention => "volume_contention",
            FaultKind::PlanChange => "plan_change",
            FaultKind::ZoningChange => "zoning_change",
        }
    }

    /// Symptoms-database entry that describes this fault.
    pub fn cause_id(self) -> &'static str {
        match self {
            FaultKind::LockContention => "db_lock_contention",
            other => other.as_str(),
        }
    }

    /// Component kind the fault targets; `None` for faults that target a
    /// query.
    pub fn target_kind(self) -> Option<NodeKind> {
        match self {
            FaultKind::LockContention => Some(NodeKind::Tablespace),
            FaultKind::CpuSaturation => Some(NodeKind::Server),
            FaultKind::ControllerPortCongestion => Some(NodeKind::ControllerPort),
            FaultKind::VolumeContention => Some(NodeKind::StoragePool),
            FaultKind::ZoningChange => Some(NodeKind::Switch),
            FaultKind::PlanChange => None,
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Component id, or query id for `plan_change`.
    pub target: String,
    pub magnitude: f64,
    /// First and last run slot (inclusive) during which the fault is active.
    pub window: (usize, usize),
}

impl FaultSpec {
    pub fn active_in(&self, slot: usize) -> bool {
        self.window.0 <= slot && slot <= self.window.1
    }
}

/// Nominal operator tree of a query; elapsed times are exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpSpec {
    pub op_id: String,
    pub op_kind: String,
    #[serde(default)]
    pub reads: Vec<String>,
    pub nominal_s: f64,
    #[serde(default)]
    pub children: Vec<OpSpec>,
}

impl OpSpec {
    fn preorder(&self) -> Vec<&OpSpec> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(op) = stack.pop() {
            out.push(op);
            stack.extend(op.children.iter().rev());
        }
        out
    }

    fn to_record(&self) -> OperatorRecord {
        OperatorRecord {
            op_id: self.op_id.clone(),
            op_kind: self.op_kind.clone(),
            reads: self.reads.clone(),
            elapsed_s: self.nominal_s,
            children: self.children.iter().map(OpSpec::to_record).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<String>,
    pub plan: OpSpec,
    /// Plan used while a `plan_change` fault on this query is active.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternate_plan: Option<OpSpec>,
}

fn default_baseline_runs() -> usize {
    20
}
fn default_fault_runs() -> usize {
    5
}
fn default_start_epoch() -> i64 {
    1_700_006_400
}
fn default_run_spacing() -> i64 {
    3600
}
fn default_interval() -> i64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_baseline_runs")]
    pub baseline_runs: usize,
    #[serde(default = "default_fault_runs")]
    pub fault_runs: usize,
    /// Start of the first run slot, seconds since the epoch.
    #[serde(default = "default_start_epoch")]
    pub start_epoch: i64,
    /// Length of one run slot in seconds; each query runs once per slot.
    #[serde(default = "default_run_spacing")]
    pub run_spacing_s: i64,
    /// Monitoring interval in seconds.
    #[serde(default = "default_interval")]
    pub interval_s: i64,
    pub topology: TopologyDoc,
    pub queries: Vec<QuerySpec>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn total_runs(&self) -> usize {
        self.baseline_runs + self.fault_runs
    }

    /// First slot in which every fault is active at once, if any.
    pub fn all_faults_active_slot(&self) -> Option<usize> {
        let start = self.faults.iter().map(|f| f.window.0).max()?;
        let end = self.faults.iter().map(|f| f.window.1).min()?;
        (start <= end).then_some(start)
    }

    pub fn run_id(&self, query_id: &str, slot: usize) -> String {
        format!("{query_id}-{slot:04}")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::InvalidScenario(msg));
        if self.interval_s <= 0 {
            return invalid(format!(
                "interval_s must be positive, got {}",
                self.interval_s
            ));
        }
        if self.run_spacing_s < 4 * self.interval_s || self.run_spacing_s % self.interval_s != 0 {
            return invalid(format!(
                "run_spacing_s ({}) must be a multiple of interval_s ({}) and at least four intervals",
                self.run_spacing_s, self.interval_s
            ));
        }
        if self.start_epoch % self.interval_s != 0 {
            return invalid("start_epoch must be aligned to interval_s".into());
        }
        if self.baseline_runs < 5 {
            return invalid(format!(
                "baseline_runs must be at least 5, got {}",
                self.baseline_runs
            ));
        }
        let violations = self.topology.violations();
        if !violations.is_empty() {
            return invalid(format!("topology: {}", violations.join("; ")));
        }
        if self.queries.is_empty() {
            return invalid("no queries".into());
        }
        let mut ids = BTreeSet::new();
        for q in &self.queries {
            if !ids.insert(q.query_id.as_str()) {
                return invalid(format!("duplicate query `{}`", q.query_id));
            }
            for plan in std::iter::once(&q.plan).chain(&q.alternate_plan) {
                self.check_plan(q, plan)?;
            }
        }
        for f in &self.faults {
            self.check_fault(f)?;
        }
        Ok(())
    }

    fn check_plan(&self, q: &QuerySpec, plan: &OpSpec) -> Result<(), SimError> {
        let ops = plan.preorder();
        if ops
            .iter()
            .any(|o| !o.nominal_s.is_finite() || o.nominal_s < 0.0)
        {
            return Err(SimError::InvalidScenario(format!(
                "query `{}`: nominal_s must be finite and non-negative",
                q.query_id
            )));
        }
        if !ops.iter().any(|o| o.nominal_s > 0.0) {
            return Err(SimError::InvalidScenario(format!(
                "query `{}`: plan has no positive operator time",
                q.query_id
            )));
        }
        let snapshot = PlanSnapshot {
            query_id: q.query_id.clone(),
            run_id: self.run_id(&q.query_id, 0),
            started_at: self.start_epoch,
            total_elapsed_s: ops.iter().map(|o| o.nominal_s).sum(),
            host: q.host.clone(),
            root: plan.to_record(),
        };
        let mut problems = snapshot.violations();
        if let Err(e) = build_apg(&snapshot, &self.topology) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidScenario(format!(
                "query `{}`: {}",
                q.query_id,
                problems.join("; ")
            )))
        }
    }

    fn check_fault(&self, f: &FaultSpec) -> Result<(), SimError> {
        let inconsistent = |reason: String| {
            Err(SimError::InconsistentFaultTarget {
                kind: f.kind,
                target: f.target.clone(),
                reason,
            })
        };
        if !(f.magnitude.is_finite() && f.magnitude > 0.0) {
            return Err(SimError::InvalidScenario(format!(
                "fault {} on `{}`: magnitude must be positive",
                f.kind, f.target
            )));
        }
        if f.window.0 > f.window.1 || f.window.1 >= self.total_runs() {
            return Err(SimError::InvalidScenario(format!(
                "fault {} on `{}`: window {:?} outside slots 0..{}",
                f.kind,
                f.target,
                f.window,
                self.total_runs()
            )));
        }
        match f.kind.target_kind() {
            None => match self.queries.iter().find(|q| q.query_id == f.target) {
                None => inconsistent("no such query".into()),
                Some(q) if q.alternate_plan.is_none() => {
                    inconsistent("query has no alternate_plan".into())
                }
                Some(_) => Ok(()),
            },
            Some(expected) => {
                let actual = self.topology.kind_of(&f.target);
                if actual != Some(expected) {
                    return inconsistent(match actual {
                        Some(k) => format!("expected a {expected}, found a {k}"),
                        None => "no such component".into(),
                    });
                }
                if f.kind == FaultKind::VolumeContention
                    && generate::contending_workloads(&self.topology, &f.target).is_empty()
                {
                    return inconsistent("no external workload shares this pool".into());
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario() -> Scenario {
        builtin_scenario("baseline").unwrap()
    }

    #[test]
    fn builtins_are_valid() {
        for name in builtin_scenario_names() {
            let s = builtin_scenario(name).unwrap();
            s.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn fault_target_must_match_kind() {
        let mut s = scenario();
        s.faults.push(FaultSpec {
            kind: FaultKind::CpuSaturation,
            target: "vol-orders".into(),
            magnitude: 0.5,
            window: (20, 24),
        });
        assert!(matches!(
            s.validate(),
            Err(SimError::InconsistentFaultTarget { .. })
        ));
    }

    #[test]
    fn contention_needs_a_sharing_workload() {
        let mut s = scenario();
        s.faults.push(FaultSpec {
            kind: FaultKind::VolumeContention,
            target: "pool-2".into(),
            magnitude: 0.5,
            window: (20, 24),
        });
        assert!(matches!(
            s.validate(),
            Err(SimError::InconsistentFaultTarget { .. })
        ));
    }

    #[test]
    fn rejects_bad_windows_and_magnitudes() {
        for (window, magnitude) in [((20, 25), 0.5), ((22, 21), 0.5), ((20, 24), 0.0)] {
            let mut s = scenario();
            s.faults.push(FaultSpec {
                kind: FaultKind::CpuSaturation,
                target: "srv-db".into(),
                magnitude,
                window,
            });
            assert!(matches!(s.validate(), Err(SimError::InvalidScenario(_))));
        }
    }

    #[test]
    fn rejects_plan_reading_unknown_tablespace() {
        let mut s = scenario();
        s.queries[0].plan.children[0].reads = vec!["ts-nowhere".into()];
        assert!(matches!(s.validate(), Err(SimError::InvalidScenario(_))));
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = r#"{"name":"x","seed":1,"topology":{"components":[]},"queries":[],"extra":1}"#;
        assert!(matches!(
            Scenario::from_json(text),
            Err(SimError::InvalidScenario(_))
        ));
    }

    #[test]
    fn all_faults_slot() {
        let s = builtin_scenario("combined").unwrap();
        assert_eq!(s.all_faults_active_slot(), Some(22));
        assert_eq!(scenario().all_faults_active_slot(), None);
    }
}

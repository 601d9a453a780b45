use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// One executed query: the plan tree with per-operator elapsed times.
///
/// Operator `elapsed_s` is the operator's own (exclusive) time, so the
/// query total is at least the time of any single operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSnapshot {
    pub query_id: String,
    pub run_id: String,
    /// Epoch seconds.
    pub started_at: i64,
    pub total_elapsed_s: f64,
    /// Database server the plan executed on. Optional when the topology
    /// declares a single server.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<String>,
    pub root: OperatorRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorRecord {
    pub op_id: String,
    pub op_kind: String,
    #[serde(default)]
    pub reads: Vec<String>,
    pub elapsed_s: f64,
    #[serde(default)]
    pub children: Vec<OperatorRecord>,
}

impl PlanSnapshot {
    /// Operators in pre-order: parent first, children left to right.
    pub fn operators(&self) -> Vec<&OperatorRecord> {
        let mut out = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(op) = stack.pop() {
            out.push(op);
            stack.extend(op.children.iter().rev());
        }
        out
    }

    pub fn ended_at(&self) -> i64 {
        self.started_at + self.total_elapsed_s.ceil() as i64
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.query_id.is_empty() {
            out.push("query_id is empty".to_string());
        }
        if self.run_id.is_empty() {
            out.push("run_id is empty".to_string());
        }
        if !(self.total_elapsed_s.is_finite() && self.total_elapsed_s > 0.0) {
            out.push(format!(
                "total_elapsed_s must be positive, got {}",
                self.total_elapsed_s
            ));
        }
        let mut ids = HashSet::new();
        for op in self.operators() {
            if !ids.insert(op.op_id.as_str()) {
                out.push(format!("operator id `{}` appears more than once", op.op_id));
            }
            if !(op.elapsed_s.is_finite() && op.elapsed_s >= 0.0) {
                out.push(format!(
                    "operator `{}` elapsed_s must be non-negative, got {}",
                    op.op_id, op.elapsed_s
                ));
            } else if op.elapsed_s > self.total_elapsed_s {
                out.push(format!(
                    "operator `{}` elapsed {} s exceeds query total {} s",
                    op.op_id, op.elapsed_s, self.total_elapsed_s
                ));
            }
        }
        out
    }
}

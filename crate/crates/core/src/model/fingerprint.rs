use std::collections::HashSet;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::ModelError;
use crate::ingest::{OperatorRecord, PlanSnapshot};

#[derive(Serialize)]
struct CanonicalOp<'a> {
    kind: &'a str,
    reads: Vec<&'a str>,
    children: Vec<CanonicalOp<'a>>,
}

fn canonical<'a>(
    op: &'a OperatorRecord,
    seen: &mut HashSet<&'a str>,
) -> Result<CanonicalOp<'a>, ModelError> {
    if !seen.insert(op.op_id.as_str()) {
        return Err(ModelError::CyclicPlan(format!(
            "operator id `{}` appears more than once",
            op.op_id
        )));
    }
    let mut reads: Vec<&str> = op.reads.iter().map(String::as_str).collect();
    reads.sort_unstable();
    reads.dedup();
    let children = op
        .children
        .iter()
        .map(|c| canonical(c, seen))
        .collect::<Result<_, _>>()?;
    Ok(CanonicalOp {
        kind: &op.op_kind,
        reads,
        children,
    })
}

/// Stable structural hash of a plan: operator kinds, child order and the
/// objects each operator reads. Timings, ids and costs do not contribute.
pub fn plan_fingerprint(plan: &PlanSnapshot) -> Result<String, ModelError> {
    let mut seen = HashSet::new();
    let canon = canonical(&plan.root, &mut seen)?;
    let bytes = serde_json::to_vec(&canon).expect("canonical plan serializes");
    let digest = Sha256::digest(&bytes);
    Ok(hex::encode(&digest[..16]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(
        id: &str,
        kind: &str,
        reads: &[&str],
        elapsed: f64,
        children: Vec<OperatorRecord>,
    ) -> OperatorRecord {
        OperatorRecord {
            op_id: id.into(),
            op_kind: kind.into(),
            reads: reads.iter().map(|s| s.to_string()).collect(),
            elapsed_s: elapsed,
            children,
        }
    }

    fn plan(root: OperatorRecord) -> PlanSnapshot {
        PlanSnapshot {
            query_id: "q".into(),
            run_id: "r".into(),
            started_at: 0,
            total_elapsed_s: 100.0,
            host: None,
            root,
        }
    }

    fn join_plan(top: &str, left_first: bool, t1: f64, t2: f64) -> PlanSnapshot {
        let a = op("s1", "SeqScan", &["ts-a"], t1, vec![]);
        let b = op("s2", "IndexScan", &["ts-b"], t2, vec![]);
        let kids = if left_first { vec![a, b] } else { vec![b, a] };
        plan(op(
            "top",
            top,
            &[],
            1.0,
            vec![op("j", "HashJoin", &[], 2.0, kids)],
        ))
    }

    #[test]
    fn timing_does_not_change_fingerprint() {
        let a = plan_fingerprint(&join_plan("Sort", true, 10.0, 5.0)).unwrap();
        let b = plan_fingerprint(&join_plan("Sort", true, 31.5, 0.2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn operator_kind_changes_fingerprint() {
        let a = plan_fingerprint(&join_plan("Sort", true, 10.0, 5.0)).unwrap();
        let b = plan_fingerprint(&join_plan("HashAggregate", true, 10.0, 5.0)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn child_order_changes_fingerprint() {
        let a = plan_fingerprint(&join_plan("Sort", true, 10.0, 5.0)).unwrap();
        let b = plan_fingerprint(&join_plan("Sort", false, 10.0, 5.0)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn duplicate_operator_id_is_malformed() {
        let p = plan(op(
            "x",
            "Sort",
            &[],
            1.0,
            vec![op("x", "SeqScan", &["t"], 1.0, vec![])],
        ));
        assert!(matches!(
            plan_fingerprint(&p),
            Err(ModelError::CyclicPlan(_))
        ));
    }

    #[test]
    fn read_order_is_not_significant() {
        let p1 = plan(op("a", "SeqScan", &["t1", "t2"], 1.0, vec![]));
        let p2 = plan(op("a", "SeqScan", &["t2", "t1"], 1.0, vec![]));
        assert_eq!(
            plan_fingerprint(&p1).unwrap(),
            plan_fingerprint(&p2).unwrap()
        );
    }
}

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::{
    detect_slowdown, impact_rollup, CauseTrace, DiagnosisConfig, DiagnosisReport, EngineError,
    RankedCause, PLAN_CHANGE_CAUSE, REPORT_SCHEMA,
};
use crate::analytics::{anomaly_score, fit_baseline, operator_degradation, AnomalyVerdict};
use crate::ingest::{DataDir, RunRecord};
use crate::model::{build_apg, AnnotatedPlanGraph};
use crate::symptoms::{match_cause, CauseLayer, EvidenceSet, RootCauseEntry};

/// Fingerprint seen most often in `history`; ties go to the most recent.
fn dominant_fingerprint(history: &[&RunRecord]) -> Option<String> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (i, r) in history.iter().enumerate() {
        let e = counts.entry(r.fingerprint.as_str()).or_insert((0, 0));
        e.0 += 1;
        e.1 = i;
    }
    counts
        .into_iter()
        .max_by_key(|(_, (count, last))| (*count, *last))
        .map(|(fp, _)| fp.to_string())
}

/// Runs the full diagnosis for one run of one query.
///
/// Steps: slowdown check, plan-change check, operator drill-down,
/// dependency closure of the degraded operators, anomaly and event
/// collection, symptom matching, impact roll-up and ranking. The result
/// depends only on the inputs.
pub fn diagnose(
    data: &DataDir,
    query_id: &str,
    run_id: &str,
    symptoms: &[RootCauseEntry],
    config: &DiagnosisConfig,
) -> Result<DiagnosisReport, EngineError> {
    config.validate()?;
    let store = &data.store;
    let (index, current) = store
        .find(query_id, run_id)
        .ok_or_else(|| EngineError::UnknownRun {
            query_id: query_id.to_string(),
            run_id: run_id.to_string(),
        })?;

    let history = store.history_before(query_id, index, None, config.history_limit);
    let verdict = detect_slowdown(&history, current, config.theta, config.min_history)?;

    let mut report = DiagnosisReport {
        schema: REPORT_SCHEMA.to_string(),
        query_id: query_id.to_string(),
        run_id: run_id.to_string(),
        verdict,
        plan_changed: false,
        baseline_fingerprint: None,
        current_fingerprint: current.fingerprint.clone(),
        degraded_operators: Vec::new(),
        candidate_nodes: Vec::new(),
        causes: Vec::new(),
        suppressed_evidence: Vec::new(),
        notes: Vec::new(),
    };
    if !report.verdict.slowed {
        report.notes.push("no slowdown detected".into());
        return Ok(report);
    }

    let baseline_fp = dominant_fingerprint(&history).expect("history is non-empty");
    report.baseline_fingerprint = Some(baseline_fp.clone());
    if baseline_fp != current.fingerprint {
        report.plan_changed = true;
        report.causes.push(plan_change_cause(
            symptoms,
            &baseline_fp,
            &current.fingerprint,
        ));
        report.notes.push(format!(
            "plan changed from {baseline_fp} to {}; deeper analysis skipped",
            current.fingerprint
        ));
        return Ok(report);
    }

    let same_plan = store.history_before(
        query_id,
        index,
        Some(&current.fingerprint),
        config.history_limit,
    );
    let operators = operator_degradation(&same_plan, current, &config.degradation())?;
    let degraded: Vec<_> = operators.into_iter().filter(|o| o.degraded).collect();
    report.degraded_operators = degraded.clone();
    if degraded.is_empty() {
        report
            .notes
            .push("query slowed but no single operator crossed the degradation thresholds".into());
        return Ok(report);
    }

    let apg = build_apg(&current.snapshot, &data.topology)?;
    let mut closures: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for d in &degraded {
        closures.insert(d.op_id.clone(), apg.dependency_closure(&d.op_id)?);
    }
    let candidates: BTreeSet<String> = closures.values().flatten().cloned().collect();
    report.candidate_nodes = candidates.iter().cloned().collect();

    // Metric baselines come only from history runs that were themselves
    // within the slowdown threshold.
    let healthy_limit = report.verdict.baseline_median_s * (1.0 + config.theta);
    let healthy: Vec<&RunRecord> = same_plan
        .iter()
        .copied()
        .filter(|r| r.total_s() < healthy_limit)
        .collect();

    let evidence = collect_evidence(data, &apg, current, &healthy, candidates, config);
    report.suppressed_evidence = evidence.suppressed();

    let matches: Vec<_> = symptoms
        .par_iter()
        .map(|entry| (entry, match_cause(entry, &evidence)))
        .collect();
    let ranked: Vec<_> = matches
        .into_iter()
        .filter(|(_, m)| !m.disqualified && m.score > 0.0)
        .collect();

    let loci: BTreeMap<String, BTreeSet<String>> = ranked
        .iter()
        .map(|(e, m)| (e.id.clone(), m.locus()))
        .collect();
    let total_delta: f64 = degraded.iter().map(|d| d.delta_s).sum();
    let impacts = impact_rollup(&degraded, &closures, &loci, total_delta)?;

    let mut causes: Vec<RankedCause> = ranked
        .into_iter()
        .map(|(entry, m)| {
            let locus = &loci[&entry.id];
            let impact = impacts[&entry.id];
            let operators = degraded
                .iter()
                .filter(|d| !closures[&d.op_id].is_disjoint(locus))
                .map(|d| d.op_id.clone())
                .collect();
            RankedCause {
                cause_id: entry.id.clone(),
                layer: entry.layer,
                description: entry.description.clone(),
                confidence: m.score,
                impact,
                rank_score: impact * m.score,
                fix: entry.fix.clone(),
                trace: CauseTrace {
                    operators,
                    locus: locus.iter().cloned().collect(),
                    missing: m
                        .missing
                        .iter()
                        .map(|&i| entry.symptoms[i].to_string())
                        .collect(),
                    satisfied: m.satisfied,
                },
            }
        })
        .collect();
    causes.sort_by(|a, b| {
        b.rank_score
            .total_cmp(&a.rank_score)
            .then_with(|| a.cause_id.cmp(&b.cause_id))
    });
    if causes.is_empty() {
        report
            .notes
            .push("no symptoms-database entry matched the evidence".into());
    }
    report.causes = causes;
    Ok(report)
}

fn collect_evidence(
    data: &DataDir,
    apg: &AnnotatedPlanGraph,
    current: &RunRecord,
    healthy: &[&RunRecord],
    candidates: BTreeSet<String>,
    config: &DiagnosisConfig,
) -> EvidenceSet {
    let window = (current.window_start, current.window_end);

    let anomalies: Vec<AnomalyVerdict> = data
        .metrics
        .par_iter()
        .filter_map(|series| {
            let current_values = series.values_in(window.0, window.1);
            if current_values.is_empty() {
                return None;
            }
            let past: Vec<f64> = healthy
                .iter()
                .flat_map(|r| series.values_in(r.window_start, r.window_end))
                .collect();
            if past.len() < config.min_baseline_samples {
                return None;
            }
            let baseline = fit_baseline(&past).ok()?;
            let score = anomaly_score(&baseline, &current_values, config.tau).ok()?;
            score.degraded.then(|| {
                AnomalyVerdict::new(
                    &series.component_id,
                    &series.metric,
                    window,
                    &baseline,
                    score,
                )
            })
        })
        .collect();

    // Configuration persists, so any change since the last healthy run is
    // relevant, not only changes inside the window.
    let config_since = healthy
        .last()
        .map_or(window.0, |r| r.window_end.min(window.0));
    let config_events = data
        .config_events
        .iter()
        .filter(|e| e.timestamp > config_since && e.timestamp <= window.1)
        .cloned()
        .collect();
    let db_events = data
        .db_events
        .iter()
        .filter(|e| e.timestamp >= window.0 && e.timestamp <= window.1)
        .cloned()
        .collect();

    EvidenceSet {
        anomalies,
        config_events,
        db_events,
        candidate_nodes: candidates,
        node_kinds: apg.nodes().iter().map(|n| (n.id.clone(), n.kind)).collect(),
    }
}

fn plan_change_cause(symptoms: &[RootCauseEntry], from: &str, to: &str) -> RankedCause {
    let entry = symptoms.iter().find(|e| e.id == PLAN_CHANGE_CAUSE);
    RankedCause {
        cause_id: PLAN_CHANGE_CAUSE.to_string(),
        layer: entry.map_or(CauseLayer::Db, |e| e.layer),
        description: entry.map_or_else(
            || format!("execution plan changed from {from} to {to}"),
            |e| format!("{} ({from} -> {to})", e.description),
        ),
        confidence: 1.0,
        impact: 1.0,
        rank_score: 1.0,
        fix: entry.and_then(|e| e.fix.clone()),
        trace: CauseTrace {
            operators: Vec::new(),
            locus: Vec::new(),
            satisfied: Vec::new(),
            missing: Vec::new(),
        },
    }
}

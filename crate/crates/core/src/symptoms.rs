//! Declarative symptoms database: root causes described by weighted
//! symptom predicates, and the matcher that scores them against evidence.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{AnomalyVerdict, Direction};
use crate::ingest::{parse_json, read_text, ConfigEvent, DbEvent, IngestError};
use crate::model::NodeKind;

/// The database shipped with the crate; covers every simulator fault.
pub const DEFAULT_SYMPTOMS_JSON: &str = include_str!("../data/symptoms.json");

#[derive(Debug, Error)]
pub enum SymptomsError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("duplicate root cause id `{0}`")]
    DuplicateCauseId(String),
    #[error("cause `{cause}` symptom {index}: {reason}")]
    InvalidPredicate {
        cause: String,
        index: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateKind {
    MetricAnomaly,
    ConfigEvent,
    DbEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMatch {
    High,
    Low,
    #[default]
    Any,
}

impl DirectionMatch {
    pub fn accepts(self, d: Direction) -> bool {
        match self {
            DirectionMatch::Any => true,
            DirectionMatch::High => d == Direction::High,
            DirectionMatch::Low => d == Direction::Low,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymptomPredicate {
    pub kind: PredicateKind,
    pub target_kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<DirectionMatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_key: Option<String>,
    pub weight: f64,
    #[serde(default)]
    pub required: bool,
}

impl SymptomPredicate {
    pub fn metric(
        target_kind: NodeKind,
        metric: &str,
        direction: DirectionMatch,
        weight: f64,
    ) -> Self {
        Self {
            kind: PredicateKind::MetricAnomaly,
            target_kind,
            metric: Some(metric.into()),
            direction: Some(direction),
            event_code: None,
            config_key: None,
            weight,
            required: false,
        }
    }

    pub fn config(target_kind: NodeKind, key: &str, weight: f64) -> Self {
        Self {
            kind: PredicateKind::ConfigEvent,
            target_kind,
            metric: None,
            direction: None,
            event_code: None,
            config_key: Some(key.into()),
            weight,
            required: false,
        }
    }

    pub fn db_event(target_kind: NodeKind, code: &str, weight: f64) -> Self {
        Self {
            kind: PredicateKind::DbEvent,
            target_kind,
            metric: None,
            direction: None,
            event_code: Some(code.into()),
            config_key: None,
            weight,
            required: false,
        }
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    fn problem(&self) -> Option<String> {
        if !(self.weight.is_finite() && self.weight > 0.0 && self.weight <= 1.0) {
            return Some(format!("weight must be in (0, 1], got {}", self.weight));
        }
        let (metric, direction, code, key) = (
            self.metric.is_some(),
            self.direction.is_some(),
            self.event_code.is_some(),
            self.config_key.is_some(),
        );
        let ok = match self.kind {
            PredicateKind::MetricAnomaly => metric && !code && !key,
            PredicateKind::ConfigEvent => key && !metric && !direction && !code,
            PredicateKind::DbEvent => code && !metric && !direction && !key,
        };
        if !ok {
            return Some(format!(
                "fields do not match predicate kind {:?}",
                self.kind
            ));
        }
        if [&self.metric, &self.event_code, &self.config_key]
            .iter()
            .any(|f| f.as_deref() == Some(""))
        {
            return Some("empty name".into());
        }
        None
    }

    /// Whether one evidence item satisfies this predicate, ignoring the
    /// candidate filter.
    pub fn matches(&self, item: &EvidenceItem, target_kind: Option<NodeKind>) -> bool {
        if target_kind != Some(self.target_kind) {
            return false;
        }
        match (self.kind, item) {
            (
                PredicateKind::MetricAnomaly,
                EvidenceItem::Anomaly {
                    metric, direction, ..
                },
            ) => {
                self.metric.as_deref() == Some(metric.as_str())
                    && self.direction.unwrap_or_default().accepts(*direction)
            }
            (PredicateKind::ConfigEvent, EvidenceItem::ConfigChange { key, .. }) => {
                self.config_key.as_deref() == Some(key.as_str())
            }
            (PredicateKind::DbEvent, EvidenceItem::DbEvent { code, .. }) => {
                self.event_code.as_deref() == Some(code.as_str())
            }
            _ => false,
        }
    }
}

impl fmt::Display for SymptomPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PredicateKind::MetricAnomaly => {
                let dir = match self.direction.unwrap_or_default() {
                    DirectionMatch::High => "high",
                    DirectionMatch::Low => "low",
                    DirectionMatch::Any => "anomalous",
                };
                write!(
                    f,
                    "{} {} {dir}",
                    self.target_kind,
                    self.metric.as_deref().unwrap_or("?")
                )?;
            }
            PredicateKind::ConfigEvent => write!(
                f,
                "{} config change `{}`",
                self.target_kind,
                self.config_key.as_deref().unwrap_or("?")
            )?,
            PredicateKind::DbEvent => write!(
                f,
                "{} db event `{}`",
                self.target_kind,
                self.event_code.as_deref().unwrap_or("?")
            )?,
        }
        if self.required {
            f.write_str(" (required)")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauseLayer {
    Db,
    San,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootCauseEntry {
    pub id: String,
    pub layer: CauseLayer,
    pub description: String,
    pub symptoms: Vec<SymptomPredicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fix: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SymptomsDoc {
    causes: Vec<RootCauseEntry>,
}

fn validate(entries: &[RootCauseEntry]) -> Result<(), SymptomsError> {
    let mut ids = HashSet::new();
    for e in entries {
        if !ids.insert(e.id.as_str()) {
            return Err(SymptomsError::DuplicateCauseId(e.id.clone()));
        }
        if e.symptoms.is_empty() {
            return Err(SymptomsError::InvalidPredicate {
                cause: e.id.clone(),
                index: 0,
                reason: "cause lists no symptoms".into(),
            });
        }
        for (i, p) in e.symptoms.iter().enumerate() {
            if let Some(reason) = p.problem() {
                return Err(SymptomsError::InvalidPredicate {
                    cause: e.id.clone(),
                    index: i,
                    reason,
                });
            }
        }
    }
    Ok(())
}

pub fn parse_symptoms_db(path: &Path, text: &str) -> Result<Vec<RootCauseEntry>, SymptomsError> {
    let doc: SymptomsDoc = parse_json(path, text)?;
    validate(&doc.causes)?;
    Ok(doc.causes)
}

pub fn load_symptoms_db(path: &Path) -> Result<Vec<RootCauseEntry>, SymptomsError> {
    parse_symptoms_db(path, &read_text(path)?)
}

pub fn default_symptoms_db() -> Vec<RootCauseEntry> {
    parse_symptoms_db(Path::new("symptoms.json"), DEFAULT_SYMPTOMS_JSON)
        .expect("bundled symptoms database is valid")
}

/// One piece of evidence, as shown in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EvidenceItem {
    Anomaly {
        component_id: String,
        metric: String,
        direction: Direction,
        score: f64,
        baseline_mean: f64,
        window_mean: f64,
    },
    ConfigChange {
        component_id: String,
        key: String,
        old_value: String,
        new_value: String,
        timestamp: i64,
    },
    DbEvent {
        target: String,
        code: String,
        timestamp: i64,
    },
}

impl EvidenceItem {
    pub fn target(&self) -> &str {
        match self {
            EvidenceItem::Anomaly { component_id, .. } => component_id,
            EvidenceItem::ConfigChange { component_id, .. } => component_id,
            EvidenceItem::DbEvent { target, .. } => target,
        }
    }
}

impl fmt::Display for EvidenceItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvidenceItem::Anomaly {
                component_id,
                metric,
                direction,
                score,
                baseline_mean,
                window_mean,
            } => write!(
                f,
                "{component_id} {metric} {} (z={score:.1}, {baseline_mean:.2} -> {window_mean:.2})",
                match direction {
                    Direction::High => "high",
                    Direction::Low => "low",
                }
            ),
            EvidenceItem::ConfigChange {
                component_id,
                key,
                old_value,
                new_value,
                timestamp,
            } => write!(
                f,
                "{component_id} {key}: {old_value} -> {new_value} at {timestamp}"
            ),
            EvidenceItem::DbEvent {
                target,
                code,
                timestamp,
            } => write!(f, "{target} {code} at {timestamp}"),
        }
    }
}

impl From<&AnomalyVerdict> for EvidenceItem {
    fn from(v: &AnomalyVerdict) -> Self {
        EvidenceItem::Anomaly {
            component_id: v.component_id.clone(),
            metric: v.metric.clone(),
            direction: v.direction,
            score: v.score,
            baseline_mean: v.baseline_mean,
            window_mean: v.window_mean,
        }
    }
}

impl From<&ConfigEvent> for EvidenceItem {
    fn from(e: &ConfigEvent) -> Self {
        EvidenceItem::ConfigChange {
            component_id: e.component_id.clone(),
            key: e.key.clone(),
            old_value: e.old_value.clone(),
            new_value: e.new_value.clone(),
            timestamp: e.timestamp,
        }
    }
}

impl From<&DbEvent> for EvidenceItem {
    fn from(e: &DbEvent) -> Self {
        EvidenceItem::DbEvent {
            target: e.target.clone(),
            code: e.code.clone(),
            timestamp: e.timestamp,
        }
    }
}

/// Observed evidence for one diagnosis, plus the set of nodes the slow
/// operators depend on. Evidence on nodes outside `candidate_nodes` is
/// kept (so it can be reported) but never counts toward a match.
#[derive(Debug, Clone, Default)]
pub struct EvidenceSet {
    pub anomalies: Vec<AnomalyVerdict>,
    pub config_events: Vec<ConfigEvent>,
    pub db_events: Vec<DbEvent>,
    pub candidate_nodes: BTreeSet<String>,
    /// Kind of every node evidence may refer to.
    pub node_kinds: BTreeMap<String, NodeKind>,
}

impl EvidenceSet {
    /// Degraded anomalies and all events, as report items.
    pub fn items(&self) -> Vec<EvidenceItem> {
        self.anomalies
            .iter()
            .filter(|a| a.degraded)
            .map(EvidenceItem::from)
            .chain(self.config_events.iter().map(EvidenceItem::from))
            .chain(self.db_events.iter().map(EvidenceItem::from))
            .collect()
    }

    /// Evidence on nodes outside the candidate set.
    pub fn suppressed(&self) -> Vec<EvidenceItem> {
        self.items()
            .into_iter()
            .filter(|i| !self.candidate_nodes.contains(i.target()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateMatch {
    pub index: usize,
    pub predicate: String,
    pub evidence: Vec<EvidenceItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub cause_id: String,
    /// Satisfied weight over total weight, in [0, 1].
    pub score: f64,
    pub satisfied: Vec<PredicateMatch>,
    /// Indices of unsatisfied predicates.
    pub missing: Vec<usize>,
    /// A required predicate is unsatisfied; the cause is not ranked.
    pub disqualified: bool,
}

impl MatchResult {
    /// Candidate nodes whose evidence satisfied at least one predicate.
    pub fn locus(&self) -> BTreeSet<String> {
        self.satisfied
            .iter()
            .flat_map(|m| m.evidence.iter().map(|e| e.target().to_string()))
            .collect()
    }
}

/// Scores one root cause against the evidence.
pub fn match_cause(entry: &RootCauseEntry, evidence: &EvidenceSet) -> MatchResult {
    let items: Vec<EvidenceItem> = evidence
        .items()
        .into_iter()
        .filter(|i| evidence.candidate_nodes.contains(i.target()))
        .collect();

    let mut satisfied = Vec::new();
    let mut missing = Vec::new();
    let mut hit_weight = 0.0;
    let mut total_weight = 0.0;
    let mut disqualified = false;
    for (index, p) in entry.symptoms.iter().enumerate() {
        total_weight += p.weight;
        let hits: Vec<EvidenceItem> = items
            .iter()
            .filter(|i| p.matches(i, evidence.node_kinds.get(i.target()).copied()))
            .cloned()
            .collect();
        if hits.is_empty() {
            missing.push(index);
            disqualified |= p.required;
        } else {
            hit_weight += p.weight;
            satisfied.push(PredicateMatch {
                index,
                predicate: p.to_string(),
                evidence: hits,
            });
        }
    }
    let score = if total_weight > 0.0 {
        (hit_weight / total_weight).clamp(0.0, 1.0)
    } else {
        0.0
    };
    MatchResult {
        cause_id: entry.id.clone(),
        score,
        satisfied,
        missing,
        disqualified,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use NodeKind::*;

    fn anomaly(component: &str, metric: &str, degraded: bool) -> AnomalyVerdict {
        AnomalyVerdict {
            component_id: component.into(),
            metric: metric.into(),
            score: if degraded { 8.0 } else { 0.5 },
            direction: Direction::High,
            degraded,
            window: (0, 600),
            baseline_mean: 10.0,
            window_mean: 30.0,
        }
    }

    fn evidence() -> EvidenceSet {
        EvidenceSet {
            anomalies: vec![
                anomaly("cp-1", "utilization_pct", true),
                anomaly("vol-1", "latency_ms", true),
                anomaly("vol-x", "iops", true),
            ],
            config_events: vec![],
            db_events: vec![DbEvent {
                timestamp: 10,
                code: "lock_wait".into(),
                target: "ts-1".into(),
            }],
            candidate_nodes: ["cp-1", "vol-1", "ts-1"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            node_kinds: [
                ("cp-1", ControllerPort),
                ("vol-1", Volume),
                ("vol-x", Volume),
                ("ts-1", Tablespace),
            ]
            .iter()
            .map(|(a, b)| (a.to_string(), *b))
            .collect(),
        }
    }

    fn entry(symptoms: Vec<SymptomPredicate>) -> RootCauseEntry {
        RootCauseEntry {
            id: "c".into(),
            layer: CauseLayer::San,
            description: "test".into(),
            symptoms,
            fix: None,
        }
    }

    #[test]
    fn all_satisfied() {
        let e = entry(vec![
            SymptomPredicate::metric(ControllerPort, "utilization_pct", DirectionMatch::High, 0.6)
                .required(),
            SymptomPredicate::db_event(Tablespace, "lock_wait", 0.4),
        ]);
        let m = match_cause(&e, &evidence());
        assert_eq!(m.score, 1.0);
        assert!(!m.disqualified);
        assert_eq!(
            m.locus(),
            ["cp-1", "ts-1"].iter().map(|s| s.to_string()).collect()
        );
    }

    #[test]
    fn none_satisfied() {
        let e = entry(vec![
            SymptomPredicate::metric(StoragePool, "utilization_pct", DirectionMatch::High, 0.5)
                .required(),
            SymptomPredicate::config(Switch, "zoning", 0.5),
        ]);
        let m = match_cause(&e, &evidence());
        assert_eq!(m.score, 0.0);
        assert!(m.disqualified);
        assert_eq!(m.missing, vec![0, 1]);
    }

    #[test]
    fn weight_arithmetic() {
        let e = entry(vec![
            SymptomPredicate::metric(ControllerPort, "utilization_pct", DirectionMatch::High, 0.5)
                .required(),
            SymptomPredicate::metric(Volume, "latency_ms", DirectionMatch::Any, 0.3),
            SymptomPredicate::config(Switch, "zoning", 0.2),
        ]);
        let m = match_cause(&e, &evidence());
        assert!((m.score - 0.8).abs() < 1e-12);
        assert!(!m.disqualified);
    }

    #[test]
    fn evidence_outside_candidates_is_ignored() {
        let e = entry(vec![SymptomPredicate::metric(
            Volume,
            "iops",
            DirectionMatch::High,
            1.0,
        )
        .required()]);
        let mut ev = evidence();
        let m = match_cause(&e, &ev);
        assert_eq!(m.score, 0.0);
        assert!(m.disqualified);
        assert_eq!(ev.suppressed().len(), 1);
        ev.candidate_nodes.insert("vol-x".into());
        assert_eq!(match_cause(&e, &ev).score, 1.0);
    }

    #[test]
    fn non_degraded_anomaly_is_not_evidence() {
        let e = entry(vec![SymptomPredicate::metric(
            Volume,
            "latency_ms",
            DirectionMatch::High,
            1.0,
        )]);
        let mut ev = evidence();
        ev.anomalies[1].degraded = false;
        assert_eq!(match_cause(&e, &ev).score, 0.0);
    }

    #[test]
    fn direction_must_match() {
        let e = entry(vec![SymptomPredicate::metric(
            Volume,
            "latency_ms",
            DirectionMatch::Low,
            1.0,
        )]);
        assert_eq!(match_cause(&e, &evidence()).score, 0.0);
    }

    #[test]
    fn default_database_is_valid() {
        let db = default_symptoms_db();
        assert!(db.len() >= 6);
        for id in [
            "db_lock_contention",
            "cpu_saturation",
            "controller_port_congestion",
            "volume_contention",
            "plan_change",
            "zoning_change",
        ] {
            assert!(db.iter().any(|e| e.id == id), "{id} missing");
        }
    }

    fn parse(text: &str) -> Result<Vec<RootCauseEntry>, SymptomsError> {
        parse_symptoms_db(Path::new("s.json"), text)
    }

    #[test]
    fn duplicate_ids_rejected() {
        let one = r#"{"id":"x","layer":"db","description":"d","symptoms":[{"kind":"db_event","target_kind":"Tablespace","event_code":"lock_wait","weight":1.0}]}"#;
        let text = format!(r#"{{"causes":[{one},{one}]}}"#);
        assert!(matches!(parse(&text), Err(SymptomsError::DuplicateCauseId(id)) if id == "x"));
    }

    #[test]
    fn zero_weight_rejected() {
        let text = r#"{"causes":[{"id":"x","layer":"db","description":"d","symptoms":[{"kind":"db_event","target_kind":"Tablespace","event_code":"lock_wait","weight":0}]}]}"#;
        assert!(matches!(
            parse(text),
            Err(SymptomsError::InvalidPredicate { .. })
        ));
    }

    #[test]
    fn mismatched_fields_rejected() {
        let text = r#"{"causes":[{"id":"x","layer":"db","description":"d","symptoms":[{"kind":"db_event","target_kind":"Tablespace","metric":"iops","weight":0.5}]}]}"#;
        assert!(matches!(
            parse(text),
            Err(SymptomsError::InvalidPredicate { .. })
        ));
    }

    #[test]
    fn empty_file_is_parse_error() {
        assert!(matches!(
            parse(""),
            Err(SymptomsError::Ingest(IngestError::Parse { .. }))
        ));
    }
}

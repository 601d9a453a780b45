//! Cross-layer diagnosis of query slowdowns for databases on a storage area
//! network.
//!
//! A query's plan is joined with the SAN topology into an annotated plan
//! graph. When a run is slower than its history, the slow operators are
//! traced to the components they depend on, anomalies and events on those
//! components are matched against a symptoms database, and candidate causes
//! are ranked by how much of the slowdown they explain.

pub mod analytics;
pub mod engine;
pub mod ingest;
pub mod model;
pub mod sim;
pub mod symptoms;

pub use engine::{diagnose, DiagnosisConfig, DiagnosisReport, RankedCause};
pub use ingest::{DataDir, MetricSeries, PlanSnapshot, RunRecord, RunStore, TopologyDoc};
pub use model::{AnnotatedPlanGraph, EdgeKind, NodeKind};
pub use symptoms::{EvidenceSet, RootCauseEntry};

//! Annotated plan graphs: query plan operators joined end to end with the
//! logical and physical SAN entities they depend on.

mod build;
mod fingerprint;
mod graph;

pub use build::build_apg;
pub use fingerprint::plan_fingerprint;
pub use graph::{AnnotatedPlanGraph, ApgEdge, ApgNode, EdgeKind, Layer, NodeKind};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("plan reads tablespace `{tablespace}` (operator `{operator}`) which the topology does not declare")]
    UnknownTablespace {
        operator: String,
        tablespace: String,
    },
    #[error("connection `{from}` -> `{to}` references an undeclared component")]
    DanglingConnection { from: String, to: String },
    #[error("malformed plan tree: {0}")]
    CyclicPlan(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{id}` is a {actual}, expected {expected}")]
    WrongKind {
        id: String,
        expected: NodeKind,
        actual: NodeKind,
    },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("{kind} edge `{source_id}` ({source_kind}) -> `{target_id}` ({target_kind}) is not permitted")]
    InvalidEdge {
        kind: EdgeKind,
        source_kind: NodeKind,
        target_kind: NodeKind,
        source_id: String,
        target_id: String,
    },
    #[error("node `{node}`: {reason}")]
    InvalidAttribute { node: String, reason: String },
    #[error("cannot place plan on a host server: {0}")]
    UnknownHost(String),
    #[error("operator `{0}` reads storage that reaches no disk")]
    NoDiskReachable(String),
}

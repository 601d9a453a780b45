//! On-disk formats and the append-only store of historical runs.
//!
//! A data directory looks like:
//!
//! ```text
//! topology.json
//! runs/<query_id>/<seq>-<run_id>.json
//! metrics/<date>.csv
//! events.jsonl        configuration changes, one per line
//! db_events.jsonl     database events (lock waits, ...), one per line
//! ```

mod dataset;
mod events;
mod metrics;
mod plan;
mod store;
mod topology;

pub use dataset::DataDir;
pub use events::{load_config_events, load_db_events, write_jsonl, ConfigEvent, DbEvent};
pub use metrics::{
    load_metrics, load_metrics_dir, parse_metrics, unit_for_metric, write_metrics_csv,
    MetricFilter, MetricSeries, Sample, DEFAULT_INTERVAL_S, METRICS_HEADER,
};
pub use plan::{OperatorRecord, PlanSnapshot};
pub use store::{RunRecord, RunStore};
pub use topology::{load_topology, Allocation, Component, Connection, Sharing, TopologyDoc};

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}:{column}: parse error: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}: schema violation: {}", path.display(), violations.join("; "))]
    SchemaViolation {
        path: PathBuf,
        violations: Vec<String>,
    },
    #[error("series {component_id}/{metric}: timestamp {timestamp} does not follow {previous}")]
    NonMonotoneTimestamps {
        component_id: String,
        metric: String,
        previous: i64,
        timestamp: i64,
    },
    #[error("series {component_id}/{metric}: gap of {gap} s is not a multiple of the {interval_s} s interval")]
    IrregularInterval {
        component_id: String,
        metric: String,
        gap: i64,
        interval_s: i64,
    },
    #[error("run id `{0}` is already present in the store")]
    DuplicateRunId(String),
    #[error("`{0}` cannot be used as a file-name component")]
    InvalidId(String),
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, err: serde_json::Error) -> Self {
        IngestError::Parse {
            path: path.to_path_buf(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub(crate) fn schema(path: &Path, violations: Vec<String>) -> Self {
        IngestError::SchemaViolation {
            path: path.to_path_buf(),
            violations,
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))
}

/// Parses a JSON document, rejecting empty input with a located error.
pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(
    path: &Path,
    text: &str,
) -> Result<T, IngestError> {
    if text.trim().is_empty() {
        return Err(IngestError::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: "empty document".into(),
        });
    }
    serde_json::from_str(text).map_err(|e| IngestError::json(path, e))
}

/// Pretty JSON with a trailing newline; the canonical on-disk form.
pub(crate) fn to_canonical_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("in-memory documents serialize");
    s.push('\n');
    s
}

/// Identifiers that become path components must be plain names.
pub(crate) fn check_file_id(id: &str) -> Result<(), IngestError> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(IngestError::InvalidId(id.to_string()))
    }
}

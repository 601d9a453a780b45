use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{read_text, IngestError};

/// A configuration change on a component.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEvent {
    pub timestamp: i64,
    pub component_id: String,
    pub key: String,
    pub old_value: String,
    pub new_value: String,
}

/// A database-side event such as a lock wait, attributed to a graph node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbEvent {
    pub timestamp: i64,
    pub code: String,
    pub target: String,
}

fn parse_jsonl<T: DeserializeOwned>(
    path: &Path,
    text: &str,
) -> Result<Vec<(usize, T)>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push((i + 1, item));
    }
    Ok(out)
}

/// Reads `events.jsonl`. A missing file means no events.
pub fn load_config_events(path: &Path) -> Result<Vec<ConfigEvent>, IngestError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let rows: Vec<(usize, ConfigEvent)> = parse_jsonl(path, &read_text(path)?)?;
    let violations: Vec<String> = rows
        .iter()
        .filter(|(_, e)| e.old_value == e.new_value)
        .map(|(line, e)| {
            format!(
                "line {line}: `{}` on `{}` does not change its value",
                e.key, e.component_id
            )
        })
        .collect();
    if !violations.is_empty() {
        return Err(IngestError::schema(path, violations));
    }
    Ok(rows.into_iter().map(|(_, e)| e).collect())
}

/// Reads `db_events.jsonl`. A missing file means no events.
pub fn load_db_events(path: &Path) -> Result<Vec<DbEvent>, IngestError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let rows: Vec<(usize, DbEvent)> = parse_jsonl(path, &read_text(path)?)?;
    Ok(rows.into_iter().map(|(_, e)| e).collect())
}

/// One compact JSON document per line.
pub fn write_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item).expect("event serializes"));
        s.push('\n');
    }
    s
}

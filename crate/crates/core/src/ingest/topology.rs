use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{parse_json, read_text, to_canonical_json, IngestError};
use crate::model::{EdgeKind, NodeKind};

/// SAN and storage configuration: declared components, physical links,
/// logical-to-physical allocations and external workload sharing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub components: Vec<Component>,
    #[serde(default)]
    pub connections: Vec<Connection>,
    #[serde(default)]
    pub allocations: Vec<Allocation>,
    #[serde(default)]
    pub sharing: Vec<Sharing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Connection {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Allocation {
    pub logical: String,
    pub physical: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sharing {
    pub workload: String,
    pub target: String,
}

impl TopologyDoc {
    pub fn component(&self, id: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn kind_of(&self, id: &str) -> Option<NodeKind> {
        self.component(id).map(|c| c.kind)
    }

    /// Every constraint the document breaks, in document order. Empty
    /// when the document is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut kinds: HashMap<&str, NodeKind> = HashMap::new();
        for (i, c) in self.components.iter().enumerate() {
            if c.id.is_empty() {
                out.push(format!("components[{i}].id is empty"));
            }
            if c.attrs.keys().any(|k| k.is_empty()) {
                out.push(format!(
                    "components[{i}] (`{}`) has an empty attribute key",
                    c.id
                ));
            }
            if matches!(
                c.kind,
                NodeKind::Query | NodeKind::Plan | NodeKind::Operator
            ) {
                out.push(format!(
                    "components[{i}] (`{}`) has plan-level kind {}",
                    c.id, c.kind
                ));
            }
            if kinds.insert(&c.id, c.kind).is_some() {
                out.push(format!("components[{i}]: duplicate id `{}`", c.id));
            }
        }

        let check_ref = |field: String, id: &str, out: &mut Vec<String>| -> Option<NodeKind> {
            match kinds.get(id) {
                Some(&k) => Some(k),
                None => {
                    out.push(format!("{field} references undeclared component `{id}`"));
                    None
                }
            }
        };

        for (i, c) in self.connections.iter().enumerate() {
            let a = check_ref(format!("connections[{i}].from"), &c.from, &mut out);
            let b = check_ref(format!("connections[{i}].to"), &c.to, &mut out);
            if let (Some(a), Some(b)) = (a, b) {
                if !EdgeKind::PathVia.allows(a, b) && !EdgeKind::PathVia.allows(b, a) {
                    out.push(format!(
                        "connections[{i}]: `{}` ({a}) and `{}` ({b}) are not adjacent on an I/O path",
                        c.from, c.to
                    ));
                }
            }
        }

        let mut alloc_out: HashMap<&str, Vec<&str>> = HashMap::new();
        for (i, a) in self.allocations.iter().enumerate() {
            let l = check_ref(format!("allocations[{i}].logical"), &a.logical, &mut out);
            let p = check_ref(format!("allocations[{i}].physical"), &a.physical, &mut out);
            if let (Some(l), Some(p)) = (l, p) {
                if !EdgeKind::MappedTo.allows(l, p) && !EdgeKind::AllocatedFrom.allows(l, p) {
                    out.push(format!(
                        "allocations[{i}]: `{}` ({l}) cannot be allocated from `{}` ({p})",
                        a.logical, a.physical
                    ));
                } else {
                    alloc_out.entry(&a.logical).or_default().push(&a.physical);
                }
            }
        }

        for (i, s) in self.sharing.iter().enumerate() {
            let w = check_ref(format!("sharing[{i}].workload"), &s.workload, &mut out);
            let t = check_ref(format!("sharing[{i}].target"), &s.target, &mut out);
            if let (Some(w), Some(t)) = (w, t) {
                if !EdgeKind::SharesWith.allows(w, t) {
                    out.push(format!(
                        "sharing[{i}]: `{}` ({w}) cannot share `{}` ({t})",
                        s.workload, s.target
                    ));
                }
            }
        }

        // Every logical container must bottom out in at least one disk.
        for c in &self.components {
            if !matches!(
                c.kind,
                NodeKind::Tablespace | NodeKind::Volume | NodeKind::StoragePool
            ) {
                continue;
            }
            let mut seen = HashSet::new();
            let mut stack = vec![c.id.as_str()];
            let mut found = false;
            while let Some(id) = stack.pop() {
                if !seen.insert(id) {
                    continue;
                }
                if kinds.get(id) == Some(&NodeKind::Disk) {
                    found = true;
                    break;
                }
                if let Some(next) = alloc_out.get(id) {
                    stack.extend(next.iter().copied());
                }
            }
            if !found {
                out.push(format!(
                    "allocation chain from `{}` ({}) does not terminate at a disk",
                    c.id, c.kind
                ));
            }
        }
        out
    }

    pub fn to_canonical_json(&self) -> String {
        to_canonical_json(self)
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        std::fs::write(path, self.to_canonical_json()).map_err(|e| IngestError::io(path, e))
    }
}

/// Reads and validates a topology document.
pub fn load_topology(path: &Path) -> Result<TopologyDoc, IngestError> {
    let text = read_text(path)?;
    let doc: TopologyDoc = parse_json(path, &text)?;
    let violations = doc.violations();
    if violations.is_empty() {
        Ok(doc)
    } else {
        Err(IngestError::schema(path, violations))
    }
}

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ModelError;

/// Kind of an entity in the annotated plan graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Query,
    Plan,
    Operator,
    Tablespace,
    Volume,
    StoragePool,
    Disk,
    Server,
    Hba,
    SwitchPort,
    Switch,
    ControllerPort,
    Controller,
    ExternalWorkload,
}

/// The layer a node kind belongs to. Every kind lives in exactly one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    DbLogical,
    SanLogical,
    SanPhysical,
    External,
}

impl NodeKind {
    pub const ALL: [NodeKind; 14] = [
        NodeKind::Query,
        NodeKind::Plan,
        NodeKind::Operator,
        NodeKind::Tablespace,
        NodeKind::Volume,
        NodeKind::StoragePool,
        NodeKind::Disk,
        NodeKind::Server,
        NodeKind::Hba,
        NodeKind::SwitchPort,
        NodeKind::Switch,
        NodeKind::ControllerPort,
        NodeKind::Controller,
        NodeKind::ExternalWorkload,
    ];

    pub fn layer(self) -> Layer {
        match self {
            NodeKind::Query | NodeKind::Plan | NodeKind::Operator | NodeKind::Tablespace => {
                Layer::DbLogical
            }
            NodeKind::Volume | NodeKind::StoragePool => Layer::SanLogical,
            NodeKind::Disk
            | NodeKind::Server
            | NodeKind::Hba
            | NodeKind::SwitchPort
            | NodeKind::Switch
            | NodeKind::ControllerPort
            | NodeKind::Controller => Layer::SanPhysical,
            NodeKind::ExternalWorkload => Layer::External,
        }
    }

    /// Position along the server-to-storage I/O path, for kinds that can
    /// appear on one.
    pub fn path_rank(self) -> Option<u8> {
        match self {
            NodeKind::Server => Some(0),
            NodeKind::Hba => Some(1),
            NodeKind::SwitchPort => Some(2),
            NodeKind::Switch => Some(3),
            NodeKind::ControllerPort => Some(4),
            NodeKind::Controller => Some(5),
            NodeKind::StoragePool => Some(6),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Query => "Query",
            NodeKind::Plan => "Plan",
            NodeKind::Operator => "Operator",
            NodeKind::Tablespace => "Tablespace",
            NodeKind::Volume => "Volume",
            NodeKind::StoragePool => "StoragePool",
            NodeKind::Disk => "Disk",
            NodeKind::Server => "Server",
            NodeKind::Hba => "Hba",
            NodeKind::SwitchPort => "SwitchPort",
            NodeKind::Switch => "Switch",
            NodeKind::ControllerPort => "ControllerPort",
            NodeKind::Controller => "Controller",
            NodeKind::ExternalWorkload => "ExternalWorkload",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Typed edge between two graph nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Query -> Plan
    PlanOf,
    /// child Operator -> parent Operator
    ChildOf,
    /// Plan -> root Operator
    OperatorOf,
    /// Operator -> Tablespace
    Reads,
    /// Tablespace -> Volume
    MappedTo,
    /// Volume -> StoragePool, StoragePool -> Disk
    AllocatedFrom,
    /// Operator -> Server
    HostedOn,
    /// One hop of Server -> Hba -> SwitchPort -> Switch -> ControllerPort -> Controller -> StoragePool
    PathVia,
    /// ExternalWorkload -> Volume | StoragePool
    SharesWith,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 9] = [
        EdgeKind::PlanOf,
        EdgeKind::ChildOf,
        EdgeKind::OperatorOf,
        EdgeKind::Reads,
        EdgeKind::MappedTo,
        EdgeKind::AllocatedFrom,
        EdgeKind::HostedOn,
        EdgeKind::PathVia,
        EdgeKind::SharesWith,
    ];

    /// Whether an edge of this kind may connect `source` to `target`.
    pub fn allows(self, source: NodeKind, target: NodeKind) -> bool {
        use NodeKind as K;
        match self {
            EdgeKind::PlanOf => source == K::Query && target == K::Plan,
            EdgeKind::ChildOf => source == K::Operator && target == K::Operator,
            EdgeKind::OperatorOf => source == K::Plan && target == K::Operator,
            EdgeKind::Reads => source == K::Operator && target == K::Tablespace,
            EdgeKind::MappedTo => source == K::Tablespace && target == K::Volume,
            EdgeKind::AllocatedFrom => matches!(
                (source, target),
                (K::Volume, K::StoragePool) | (K::StoragePool, K::Disk)
            ),
            EdgeKind::HostedOn => source == K::Operator && target == K::Server,
            EdgeKind::PathVia => match (source.path_rank(), target.path_rank()) {
                (Some(s), Some(t)) => t == s + 1,
                _ => false,
            },
            EdgeKind::SharesWith => {
                source == K::ExternalWorkload && matches!(target, K::Volume | K::StoragePool)
            }
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApgNode {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, Value>,
}

impl ApgNode {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        let id = id.into();
        Self {
            label: id.clone(),
            id,
            kind,
            attrs: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ApgEdge {
    pub source: String,
    pub target: String,
    pub kind: EdgeKind,
}

impl ApgEdge {
    pub fn new(source: impl Into<String>, target: impl Into<String>, kind: EdgeKind) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            kind,
        }
    }
}

/// The annotated plan graph: plan operators joined with the logical and
/// physical storage entities they depend on. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "GraphRepr", into = "GraphRepr")]
pub struct AnnotatedPlanGraph {
    query_id: String,
    plan_fingerprint: String,
    nodes: Vec<ApgNode>,
    edges: Vec<ApgEdge>,
    index: HashMap<String, usize>,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    query_id: String,
    plan_fingerprint: String,
    nodes: Vec<ApgNode>,
    edges: Vec<ApgEdge>,
}

impl From<GraphRepr> for AnnotatedPlanGraph {
    fn from(r: GraphRepr) -> Self {
        Self::assemble(r.query_id, r.plan_fingerprint, r.nodes, r.edges)
    }
}

impl From<AnnotatedPlanGraph> for GraphRepr {
    fn from(g: AnnotatedPlanGraph) -> Self {
        GraphRepr {
            query_id: g.query_id,
            plan_fingerprint: g.plan_fingerprint,
            nodes: g.nodes,
            edges: g.edges,
        }
    }
}

impl PartialEq for AnnotatedPlanGraph {
    fn eq(&self, other: &Self) -> bool {
        self.query_id == other.query_id
            && self.plan_fingerprint == other.plan_fingerprint
            && self.nodes == other.nodes
            && self.edges == other.edges
    }
}

impl AnnotatedPlanGraph {
    /// Assembles a graph from raw parts, checking id uniqueness, endpoint
    /// existence and edge-kind constraints. Plan-tree and storage-path
    /// invariants are checked by [`super::build_apg`], not here.
    pub fn from_parts(
        query_id: impl Into<String>,
        plan_fingerprint: impl Into<String>,
        mut nodes: Vec<ApgNode>,
        mut edges: Vec<ApgEdge>,
    ) -> Result<Self, ModelError> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in nodes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(ModelError::DuplicateNode(pair[0].id.clone()));
            }
        }
        for node in &nodes {
            if node.id.is_empty() {
                return Err(ModelError::InvalidAttribute {
                    node: node.id.clone(),
                    reason: "node id is empty".into(),
                });
            }
            if node.attrs.keys().any(|k| k.is_empty()) {
                return Err(ModelError::InvalidAttribute {
                    node: node.id.clone(),
                    reason: "attribute key is empty".into(),
                });
            }
        }
        let kinds: HashMap<&str, NodeKind> =
            nodes.iter().map(|n| (n.id.as_str(), n.kind)).collect();
        for e in &edges {
            let (Some(&s), Some(&t)) = (kinds.get(e.source.as_str()), kinds.get(e.target.as_str()))
            else {
                return Err(ModelError::DanglingConnection {
                    from: e.source.clone(),
                    to: e.target.clone(),
                });
            };
            if !e.kind.allows(s, t) {
                return Err(ModelError::InvalidEdge {
                    kind: e.kind,
                    source_kind: s,
                    target_kind: t,
                    source_id: e.source.clone(),
                    target_id: e.target.clone(),
                });
            }
        }
        edges.sort();
        edges.dedup();
        Ok(Self::assemble(
            query_id.into(),
            plan_fingerprint.into(),
            nodes,
            edges,
        ))
    }

    fn assemble(
        query_id: String,
        plan_fingerprint: String,
        nodes: Vec<ApgNode>,
        edges: Vec<ApgEdge>,
    ) -> Self {
        let index: HashMap<String, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        let mut out = vec![Vec::new(); nodes.len()];
        let mut inc = vec![Vec::new(); nodes.len()];
        for (ei, e) in edges.iter().enumerate() {
            if let (Some(&s), Some(&t)) = (index.get(&e.source), index.get(&e.target)) {
                out[s].push(ei);
                inc[t].push(ei);
            }
        }
        Self {
            query_id,
            plan_fingerprint,
            nodes,
            edges,
            index,
            out,
            inc,
        }
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn plan_fingerprint(&self) -> &str {
        &self.plan_fingerprint
    }

    /// Nodes, sorted by id.
    pub fn nodes(&self) -> &[ApgNode] {
        &self.nodes
    }

    /// Edges, sorted by (source, target, kind).
    pub fn edges(&self) -> &[ApgEdge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&ApgNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn kind_of(&self, id: &str) -> Option<NodeKind> {
        self.node(id).map(|n| n.kind)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &ApgNode> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    /// Targets of outgoing edges of `kind` from `id`.
    pub fn successors<'a>(
        &'a self,
        id: &str,
        kind: EdgeKind,
    ) -> impl Iterator<Item = &'a str> + 'a {
        let edges = self
            .index
            .get(id)
            .map(|&i| self.out[i].as_slice())
            .unwrap_or(&[]);
        edges
            .iter()
            .map(move |&ei| &self.edges[ei])
            .filter(move |e| e.kind == kind)
            .map(|e| e.target.as_str())
    }

    /// Sources of incoming edges of `kind` into `id`.
    pub fn predecessors<'a>(
        &'a self,
        id: &str,
        kind: EdgeKind,
    ) -> impl Iterator<Item = &'a str> + 'a {
        let edges = self
            .index
            .get(id)
            .map(|&i| self.inc[i].as_slice())
            .unwrap_or(&[]);
        edges
            .iter()
            .map(move |&ei| &self.edges[ei])
            .filter(move |e| e.kind == kind)
            .map(|e| e.source.as_str())
    }

    /// Every node the operator depends on for its execution: the storage
    /// chain under the tablespaces it reads, its host servers, and every
    /// fabric element on an I/O path from a host to that storage. Other
    /// operators are never included.
    ///
    /// Fabric elements are only included when they lie on a path that ends
    /// in the operator's own storage, so an operator without reads maps to
    /// its host alone.
    pub fn dependency_closure(&self, operator_id: &str) -> Result<BTreeSet<String>, ModelError> {
        let kind = self
            .kind_of(operator_id)
            .ok_or_else(|| ModelError::UnknownNode(operator_id.to_string()))?;
        if kind != NodeKind::Operator {
            return Err(ModelError::WrongKind {
                id: operator_id.to_string(),
                expected: NodeKind::Operator,
                actual: kind,
            });
        }

        let storage = self.walk(self.successors(operator_id, EdgeKind::Reads), |g, id| {
            g.successors(id, EdgeKind::MappedTo)
                .chain(g.successors(id, EdgeKind::AllocatedFrom))
                .collect()
        });
        let hosts: BTreeSet<&str> = self.successors(operator_id, EdgeKind::HostedOn).collect();

        let downstream = self.walk(hosts.iter().copied(), |g, id| {
            g.successors(id, EdgeKind::PathVia).collect()
        });
        let upstream = self.walk(storage.iter().copied(), |g, id| {
            g.predecessors(id, EdgeKind::PathVia).collect()
        });

        let mut closure: BTreeSet<String> = BTreeSet::new();
        closure.extend(storage.iter().map(|s| s.to_string()));
        closure.extend(hosts.iter().map(|s| s.to_string()));
        closure.extend(downstream.intersection(&upstream).map(|s| s.to_string()));
        closure.retain(|id| self.kind_of(id) != Some(NodeKind::Operator));
        Ok(closure)
    }

    /// Breadth-first walk, inclusive of the start nodes.
    fn walk<'a, I, F>(&'a self, start: I, next: F) -> BTreeSet<&'a str>
    where
        I: IntoIterator<Item = &'a str>,
        F: Fn(&'a Self, &str) -> Vec<&'a str>,
    {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::new();
        for s in start {
            if seen.insert(s) {
                queue.push_back(s);
            }
        }
        while let Some(id) = queue.pop_front() {
            for n in next(self, id) {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Operators in pre-order from the plan root (parents before children,
    /// children in plan order).
    pub fn operators_preorder(&self) -> Vec<&str> {
        let Some(root) = self.root_operator() else {
            return Vec::new();
        };
        let mut order = Vec::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            order.push(id);
            let mut children = self.children_of(id);
            children.reverse();
            stack.extend(children);
        }
        order
    }

    /// Root operator of the plan tree: the one with no parent.
    pub fn root_operator(&self) -> Option<&str> {
        self.nodes_of_kind(NodeKind::Operator)
            .map(|n| n.id.as_str())
            .find(|id| self.successors(id, EdgeKind::ChildOf).next().is_none())
    }

    /// Children of an operator, ordered by their `child_index` attribute.
    pub fn children_of<'a>(&'a self, id: &str) -> Vec<&'a str> {
        let mut children: Vec<&str> = self.predecessors(id, EdgeKind::ChildOf).collect();
        children.sort_by_key(|c| {
            self.node(c)
                .and_then(|n| n.attrs.get("child_index"))
                .and_then(Value::as_u64)
                .unwrap_or(u64::MAX)
        });
        children
    }

    /// Canonical serialized form; byte-identical for identical inputs.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization is infallible")
    }
}

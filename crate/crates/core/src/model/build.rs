use std::collections::HashMap;

use serde_json::Value;

use super::graph::{AnnotatedPlanGraph, ApgEdge, ApgNode, EdgeKind, NodeKind};
use super::{plan_fingerprint, ModelError};
use crate::ingest::{OperatorRecord, PlanSnapshot, TopologyDoc};

pub(crate) fn query_node_id(query_id: &str) -> String {
    format!("query:{query_id}")
}

pub(crate) fn plan_node_id(fingerprint: &str) -> String {
    format!("plan:{fingerprint}")
}

/// Builds the annotated plan graph for one executed plan over a SAN
/// topology. Node and edge order is sorted by id, so identical inputs
/// serialize identically.
pub fn build_apg(
    plan: &PlanSnapshot,
    topology: &TopologyDoc,
) -> Result<AnnotatedPlanGraph, ModelError> {
    let fingerprint = plan_fingerprint(plan)?;

    let kinds: HashMap<&str, NodeKind> = topology
        .components
        .iter()
        .map(|c| (c.id.as_str(), c.kind))
        .collect();

    let host = resolve_host(plan, topology, &kinds)?;

    let mut nodes = Vec::new();
    let mut edges = Vec::new();

    let query_id = query_node_id(&plan.query_id);
    let plan_id = plan_node_id(&fingerprint);
    let mut query_node = ApgNode::new(&query_id, NodeKind::Query);
    query_node.label = plan.query_id.clone();
    let mut plan_node = ApgNode::new(&plan_id, NodeKind::Plan);
    plan_node
        .attrs
        .insert("fingerprint".into(), Value::String(fingerprint.clone()));
    nodes.push(query_node);
    nodes.push(plan_node);
    edges.push(ApgEdge::new(&query_id, &plan_id, EdgeKind::PlanOf));
    edges.push(ApgEdge::new(
        &plan_id,
        &plan.root.op_id,
        EdgeKind::OperatorOf,
    ));

    add_operator(&plan.root, None, 0, &host, &kinds, &mut nodes, &mut edges)?;

    for c in &topology.components {
        nodes.push(ApgNode {
            id: c.id.clone(),
            kind: c.kind,
            label: c.label.clone().unwrap_or_else(|| c.id.clone()),
            attrs: c.attrs.clone(),
        });
    }

    for conn in &topology.connections {
        let (Some(&a), Some(&b)) = (kinds.get(conn.from.as_str()), kinds.get(conn.to.as_str()))
        else {
            return Err(ModelError::DanglingConnection {
                from: conn.from.clone(),
                to: conn.to.clone(),
            });
        };
        // Links are physical and undirected; orient them server-to-storage.
        let forward = match (a.path_rank(), b.path_rank()) {
            (Some(ra), Some(rb)) => ra <= rb,
            _ => true,
        };
        let (s, t) = if forward {
            (&conn.from, &conn.to)
        } else {
            (&conn.to, &conn.from)
        };
        edges.push(ApgEdge::new(s, t, EdgeKind::PathVia));
    }

    for alloc in &topology.allocations {
        let (Some(&l), Some(_)) = (
            kinds.get(alloc.logical.as_str()),
            kinds.get(alloc.physical.as_str()),
        ) else {
            return Err(ModelError::DanglingConnection {
                from: alloc.logical.clone(),
                to: alloc.physical.clone(),
            });
        };
        let kind = if l == NodeKind::Tablespace {
            EdgeKind::MappedTo
        } else {
            EdgeKind::AllocatedFrom
        };
        edges.push(ApgEdge::new(&alloc.logical, &alloc.physical, kind));
    }

    for share in &topology.sharing {
        if !kinds.contains_key(share.workload.as_str())
            || !kinds.contains_key(share.target.as_str())
        {
            return Err(ModelError::DanglingConnection {
                from: share.workload.clone(),
                to: share.target.clone(),
            });
        }
        edges.push(ApgEdge::new(
            &share.workload,
            &share.target,
            EdgeKind::SharesWith,
        ));
    }

    let graph = AnnotatedPlanGraph::from_parts(&plan.query_id, fingerprint, nodes, edges)?;

    for op in plan.operators() {
        if op.reads.is_empty() {
            continue;
        }
        let closure = graph.dependency_closure(&op.op_id)?;
        let reaches_disk = closure
            .iter()
            .any(|id| graph.kind_of(id) == Some(NodeKind::Disk));
        if !reaches_disk {
            return Err(ModelError::NoDiskReachable(op.op_id.clone()));
        }
    }

    Ok(graph)
}

fn resolve_host(
    plan: &PlanSnapshot,
    topology: &TopologyDoc,
    kinds: &HashMap<&str, NodeKind>,
) -> Result<String, ModelError> {
    match &plan.host {
        Some(h) => match kinds.get(h.as_str()) {
            Some(NodeKind::Server) => Ok(h.clone()),
            Some(&other) => Err(ModelError::WrongKind {
                id: h.clone(),
                expected: NodeKind::Server,
                actual: other,
            }),
            None => Err(ModelError::UnknownHost(format!(
                "server `{h}` is not declared"
            ))),
        },
        None => {
            let mut servers = topology
                .components
                .iter()
                .filter(|c| c.kind == NodeKind::Server);
            match (servers.next(), servers.next()) {
                (Some(s), None) => Ok(s.id.clone()),
                (None, _) => Err(ModelError::UnknownHost(
                    "topology declares no server".into(),
                )),
                (Some(_), Some(_)) => Err(ModelError::UnknownHost(
                    "plan names no host and the topology declares several servers".into(),
                )),
            }
        }
    }
}

fn add_operator(
    op: &OperatorRecord,
    parent: Option<&str>,
    child_index: usize,
    host: &str,
    kinds: &HashMap<&str, NodeKind>,
    nodes: &mut Vec<ApgNode>,
    edges: &mut Vec<ApgEdge>,
) -> Result<(), ModelError> {
    let mut node = ApgNode::new(&op.op_id, NodeKind::Operator);
    node.label = format!("{} {}", op.op_kind, op.op_id);
    node.attrs
        .insert("op_kind".into(), Value::String(op.op_kind.clone()));
    node.attrs
        .insert("child_index".into(), Value::from(child_index as u64));
    nodes.push(node);

    if let Some(p) = parent {
        edges.push(ApgEdge::new(&op.op_id, p, EdgeKind::ChildOf));
    }
    edges.push(ApgEdge::new(&op.op_id, host, EdgeKind::HostedOn));
    for ts in &op.reads {
        if kinds.get(ts.as_str()) != Some(&NodeKind::Tablespace) {
            return Err(ModelError::UnknownTablespace {
                operator: op.op_id.clone(),
                tablespace: ts.clone(),
            });
        }
        edges.push(ApgEdge::new(&op.op_id, ts, EdgeKind::Reads));
    }
    for (i, child) in op.children.iter().enumerate() {
        add_operator(child, Some(&op.op_id), i, host, kinds, nodes, edges)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeSet, VecDeque};

    use super::*;
    use crate::ingest::{Allocation, Component, Connection};

    fn comp(id: &str, kind: NodeKind) -> Component {
        Component {
            id: id.into(),
            kind,
            label: None,
            attrs: Default::default(),
        }
    }

    fn conn(a: &str, b: &str) -> Connection {
        Connection {
            from: a.into(),
            to: b.into(),
        }
    }

    fn alloc(l: &str, p: &str) -> Allocation {
        Allocation {
            logical: l.into(),
            physical: p.into(),
        }
    }

    /// T -> V -> P -> {d1, d2}; S -> H -> SP -> SW -> CP -> C -> P.
    fn minimal_topology() -> TopologyDoc {
        use NodeKind::*;
        TopologyDoc {
            components: vec![
                comp("T", Tablespace),
                comp("V", Volume),
                comp("P", StoragePool),
                comp("d1", Disk),
                comp("d2", Disk),
                comp("S", Server),
                comp("H", Hba),
                comp("SP", SwitchPort),
                comp("SW", Switch),
                comp("CP", ControllerPort),
                comp("C", Controller),
            ],
            connections: vec![
                conn("S", "H"),
                conn("H", "SP"),
                conn("SP", "SW"),
                conn("SW", "CP"),
                conn("CP", "C"),
                conn("C", "P"),
            ],
            allocations: vec![
                alloc("T", "V"),
                alloc("V", "P"),
                alloc("P", "d1"),
                alloc("P", "d2"),
            ],
            sharing: vec![],
        }
    }

    fn op(id: &str, kind: &str, reads: &[&str], children: Vec<OperatorRecord>) -> OperatorRecord {
        OperatorRecord {
            op_id: id.into(),
            op_kind: kind.into(),
            reads: reads.iter().map(|s| s.to_string()).collect(),
            elapsed_s: 1.0,
            children,
        }
    }

    fn snapshot(root: OperatorRecord) -> PlanSnapshot {
        PlanSnapshot {
            query_id: "q1".into(),
            run_id: "r1".into(),
            started_at: 0,
            total_elapsed_s: 10.0,
            host: None,
            root,
        }
    }

    fn ids(list: &[&str]) -> BTreeSet<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_scan_plan() {
        let g = build_apg(
            &snapshot(op("scan", "SeqScan", &["T"], vec![])),
            &minimal_topology(),
        )
        .unwrap();
        let topo_nodes = g
            .nodes()
            .iter()
            .filter(|n| {
                !matches!(
                    n.kind,
                    NodeKind::Query | NodeKind::Plan | NodeKind::Operator
                )
            })
            .count();
        assert_eq!(topo_nodes, 11);
        assert_eq!(g.nodes().len(), 14);
        assert_eq!(g.operators_preorder(), vec!["scan"]);
        assert_eq!(g.root_operator(), Some("scan"));
        assert!(g.children_of("scan").is_empty());
        assert_eq!(
            g.dependency_closure("scan").unwrap(),
            ids(&["T", "V", "P", "d1", "d2", "S", "H", "SP", "SW", "CP", "C"])
        );
    }

    #[test]
    fn unknown_tablespace_rejected() {
        let err = build_apg(
            &snapshot(op("scan", "SeqScan", &["tX"], vec![])),
            &minimal_topology(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModelError::UnknownTablespace {
                operator: "scan".into(),
                tablespace: "tX".into()
            }
        );
    }

    #[test]
    fn dangling_connection_rejected() {
        let mut topo = minimal_topology();
        topo.connections.push(conn("CP", "ghost"));
        let err = build_apg(&snapshot(op("scan", "SeqScan", &["T"], vec![])), &topo).unwrap_err();
        assert!(matches!(err, ModelError::DanglingConnection { .. }));
    }

    #[test]
    fn duplicate_operator_rejected() {
        let plan = snapshot(op(
            "a",
            "Sort",
            &[],
            vec![op("a", "SeqScan", &["T"], vec![])],
        ));
        assert!(matches!(
            build_apg(&plan, &minimal_topology()),
            Err(ModelError::CyclicPlan(_))
        ));
    }

    #[test]
    fn cpu_only_operator_maps_to_host() {
        let plan = snapshot(op(
            "sort",
            "Sort",
            &[],
            vec![op("scan", "SeqScan", &["T"], vec![])],
        ));
        let g = build_apg(&plan, &minimal_topology()).unwrap();
        assert_eq!(g.dependency_closure("sort").unwrap(), ids(&["S"]));
    }

    #[test]
    fn closure_errors() {
        let g = build_apg(
            &snapshot(op("scan", "SeqScan", &["T"], vec![])),
            &minimal_topology(),
        )
        .unwrap();
        assert_eq!(
            g.dependency_closure("nonexistent"),
            Err(ModelError::UnknownNode("nonexistent".into()))
        );
        assert!(matches!(
            g.dependency_closure("V"),
            Err(ModelError::WrongKind { .. })
        ));
    }

    #[test]
    fn storage_without_disk_rejected() {
        let mut topo = minimal_topology();
        topo.allocations.retain(|a| a.logical != "P");
        assert_eq!(
            build_apg(&snapshot(op("scan", "SeqScan", &["T"], vec![])), &topo),
            Err(ModelError::NoDiskReachable("scan".into()))
        );
    }

    /// Brute-force edge walk over the raw edge list: repeatedly scan every
    /// edge until no new node is added.
    fn brute_reach(g: &AnnotatedPlanGraph, start: &str, kinds: &[EdgeKind]) -> BTreeSet<String> {
        let mut reach: BTreeSet<String> = BTreeSet::new();
        reach.insert(start.to_string());
        loop {
            let before = reach.len();
            for e in g.edges() {
                if kinds.contains(&e.kind) && reach.contains(&e.source) {
                    reach.insert(e.target.clone());
                }
            }
            if reach.len() == before {
                break;
            }
        }
        reach
    }

    #[test]
    fn shared_volume_scans_reach_same_disks() {
        use NodeKind::*;
        let mut topo = minimal_topology();
        topo.components.push(comp("T2", Tablespace));
        topo.allocations.push(alloc("T2", "V"));
        let plan = snapshot(op(
            "sort",
            "Sort",
            &[],
            vec![op(
                "nl",
                "NestedLoop",
                &[],
                vec![
                    op("scan1", "SeqScan", &["T"], vec![]),
                    op("scan2", "SeqScan", &["T2"], vec![]),
                ],
            )],
        ));
        let g = build_apg(&plan, &topo).unwrap();
        assert_eq!(g.operators_preorder(), vec!["sort", "nl", "scan1", "scan2"]);

        let storage_kinds = [EdgeKind::Reads, EdgeKind::MappedTo, EdgeKind::AllocatedFrom];
        let disks = |op: &str| -> BTreeSet<String> {
            brute_reach(&g, op, &storage_kinds)
                .into_iter()
                .filter(|id| g.kind_of(id) == Some(Disk))
                .collect()
        };
        assert_eq!(disks("scan1"), ids(&["d1", "d2"]));
        assert_eq!(disks("scan2"), ids(&["d1", "d2"]));

        let c1 = g.dependency_closure("scan1").unwrap();
        let c2 = g.dependency_closure("scan2").unwrap();
        let d1: BTreeSet<_> = c1
            .iter()
            .filter(|id| g.kind_of(id) == Some(Disk))
            .cloned()
            .collect();
        let d2: BTreeSet<_> = c2
            .iter()
            .filter(|id| g.kind_of(id) == Some(Disk))
            .cloned()
            .collect();
        assert_eq!(d1, disks("scan1"));
        assert_eq!(d2, disks("scan2"));
    }

    #[test]
    fn multipath_closure_includes_every_path() {
        use NodeKind::*;
        let mut topo = minimal_topology();
        for (id, kind) in [
            ("H2", Hba),
            ("SP2", SwitchPort),
            ("SW2", Switch),
            ("CP2", ControllerPort),
        ] {
            topo.components.push(comp(id, kind));
        }
        topo.connections.extend([
            conn("H2", "S"),
            conn("SP2", "H2"),
            conn("SW2", "SP2"),
            conn("CP2", "SW2"),
            conn("C", "CP2"),
        ]);
        let g = build_apg(&snapshot(op("scan", "SeqScan", &["T"], vec![])), &topo).unwrap();
        let closure = g.dependency_closure("scan").unwrap();
        for id in ["H", "H2", "SP", "SP2", "SW", "SW2", "CP", "CP2", "C"] {
            assert!(closure.contains(id), "{id} missing");
        }
    }

    #[test]
    fn path_to_unrelated_pool_is_excluded() {
        use NodeKind::*;
        let mut topo = minimal_topology();
        for (id, kind) in [
            ("CP9", ControllerPort),
            ("C9", Controller),
            ("P9", StoragePool),
            ("d9", Disk),
        ] {
            topo.components.push(comp(id, kind));
        }
        topo.connections
            .extend([conn("SW", "CP9"), conn("CP9", "C9"), conn("C9", "P9")]);
        topo.allocations.push(alloc("P9", "d9"));
        let g = build_apg(&snapshot(op("scan", "SeqScan", &["T"], vec![])), &topo).unwrap();
        let closure = g.dependency_closure("scan").unwrap();
        assert!(!closure.contains("CP9"));
        assert!(!closure.contains("P9"));
        assert!(closure.contains("SW"));
    }

    #[test]
    fn build_is_deterministic() {
        let plan = snapshot(op(
            "sort",
            "Sort",
            &[],
            vec![op("scan", "SeqScan", &["T"], vec![])],
        ));
        let mut topo = minimal_topology();
        let a = build_apg(&plan, &topo).unwrap().to_canonical_json();
        topo.components.reverse();
        topo.connections.reverse();
        let b = build_apg(&plan, &topo).unwrap().to_canonical_json();
        assert_eq!(a, b);
        let back: AnnotatedPlanGraph = serde_json::from_str(&a).unwrap();
        assert_eq!(back.to_canonical_json(), a);
    }

    #[test]
    fn plan_tree_is_rooted() {
        let plan = snapshot(op(
            "sort",
            "Sort",
            &[],
            vec![op("scan", "SeqScan", &["T"], vec![])],
        ));
        let g = build_apg(&plan, &minimal_topology()).unwrap();
        let mut parents = VecDeque::new();
        for o in g.nodes_of_kind(NodeKind::Operator) {
            parents.push_back(g.successors(&o.id, EdgeKind::ChildOf).count());
        }
        assert_eq!(parents.iter().filter(|&&c| c == 0).count(), 1);
        assert!(parents.iter().all(|&c| c <= 1));
    }
}

//! Call graph extraction.
//!
//! The call graph is the skeleton the candidate search walks: entrypoints
//! and actions connected by call edges, plus one node per distinct
//! `(container, entity, mode)` access and one per accessed entity. Role
//! primitives (grant, revoke) and branches never show up here; they only
//! matter to the role-state traversal later.
//!
//! Node ids are dense `u32`s assigned in a fixed order derived from the
//! factory (entrypoints, then actions, then accesses in scan order, then
//! accessed entities in declaration order), so identical factories always
//! produce identical graphs, byte for byte in the dumps.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::time::Instant;

use serde::Serialize;

use crate::index::{ContainerRef, FactoryIndex, NodeIx};
use crate::model::AccessMode;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphNode {
    Entrypoint {
        /// Index into `FactoryIndex::screens`.
        screen: usize,
        qualified: String,
    },
    Action {
        /// Index into `FactoryIndex::actions`.
        action: usize,
        qualified: String,
        /// No chain of calls from any entrypoint reaches this action.
        orphan: bool,
    },
    Access {
        /// Graph node id of the owning container.
        container: u32,
        /// Index into `factory.entities`.
        entity: usize,
        mode: AccessMode,
    },
    Entity {
        /// Index into `factory.entities`.
        entity: usize,
        name: String,
    },
}

/// Size and cost counters captured while building the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub build_millis: u64,
    pub approximate_resident_bytes: usize,
}

#[derive(Debug)]
pub struct CallGraph {
    pub nodes: Vec<GraphNode>,
    /// Sorted, deduplicated (from, to) pairs.
    pub edges: Vec<(u32, u32)>,
    /// Out-neighbors per node, ascending.
    pub adjacency: Vec<Vec<u32>>,
    stats: GraphStats,
    /// Graph node id of each screen container, aligned with
    /// `FactoryIndex::screens`.
    pub entrypoint_nodes: Vec<u32>,
    /// Graph node id of each action container, aligned with
    /// `FactoryIndex::actions`.
    pub action_nodes: Vec<u32>,
}

impl CallGraph {
    pub fn out(&self, node: u32) -> &[u32] {
        &self.adjacency[node as usize]
    }

    /// Human-readable name for a node, used in dumps and call paths.
    pub fn label(&self, node: u32) -> String {
        match &self.nodes[node as usize] {
            GraphNode::Entrypoint { qualified, .. } | GraphNode::Action { qualified, .. } => {
                qualified.clone()
            }
            GraphNode::Access {
                container,
                entity,
                mode,
            } => {
                let owner = match &self.nodes[*container as usize] {
                    GraphNode::Entrypoint { qualified, .. }
                    | GraphNode::Action { qualified, .. } => qualified.as_str(),
                    _ => unreachable!("access containers are entrypoints or actions"),
                };
                let entity = self.entity_display(*entity);
                format!("{mode}:{entity}@{owner}")
            }
            GraphNode::Entity { name, .. } => name.clone(),
        }
    }

    fn entity_display(&self, entity: usize) -> &str {
        self.nodes
            .iter()
            .find_map(|n| match n {
                GraphNode::Entity { entity: e, name } if *e == entity => Some(name.as_str()),
                _ => None,
            })
            .unwrap_or("?")
    }

    /// Adjacency dump as deterministic JSON.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "snake_case")]
        enum JsonNode<'a> {
            Entrypoint { id: u32, name: &'a str },
            Action { id: u32, name: &'a str, orphan: bool },
            Access {
                id: u32,
                container: String,
                entity: &'a str,
                mode: AccessMode,
            },
            Entity { id: u32, name: &'a str },
        }
        #[derive(Serialize)]
        struct JsonEdge {
            from: u32,
            to: u32,
        }
        #[derive(Serialize)]
        struct JsonGraph<'a> {
            format_version: u64,
            nodes: Vec<JsonNode<'a>>,
            edges: Vec<JsonEdge>,
        }

        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let id = i as u32;
                match n {
                    GraphNode::Entrypoint { qualified, .. } => JsonNode::Entrypoint {
                        id,
                        name: qualified,
                    },
                    GraphNode::Action {
                        qualified, orphan, ..
                    } => JsonNode::Action {
                        id,
                        name: qualified,
                        orphan: *orphan,
                    },
                    GraphNode::Access {
                        container,
                        entity,
                        mode,
                    } => JsonNode::Access {
                        id,
                        container: self.label(*container),
                        entity: self.entity_display(*entity),
                        mode: *mode,
                    },
                    GraphNode::Entity { name, .. } => JsonNode::Entity { id, name },
                }
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|&(from, to)| JsonEdge { from, to })
            .collect();
        let graph = JsonGraph {
            format_version: crate::model::FORMAT_VERSION,
            nodes,
            edges,
        };
        let mut text = serde_json::to_string_pretty(&graph).expect("graph serialization is infallible");
        text.push('\n');
        text
    }

    /// Graphviz DOT dump, stable across runs.
    pub fn to_dot(&self) -> String {
        fn escape(s: &str) -> String {
            s.replace('\\', "\\\\").replace('"', "\\\"")
        }
        let mut out = String::from("digraph callgraph {\n  rankdir=LR;\n");
        for (i, node) in self.nodes.iter().enumerate() {
            let (shape, extra) = match node {
                GraphNode::Entrypoint { .. } => ("box", ""),
                GraphNode::Action { orphan: true, .. } => ("oval", " style=dashed"),
                GraphNode::Action { .. } => ("oval", ""),
                GraphNode::Access { .. } => ("diamond", ""),
                GraphNode::Entity { .. } => ("cylinder", ""),
            };
            out.push_str(&format!(
                "  n{i} [label=\"{}\" shape={shape}{extra}];\n",
                escape(&self.label(i as u32))
            ));
        }
        for (from, to) in &self.edges {
            out.push_str(&format!("  n{from} -> n{to};\n"));
        }
        out.push_str("}\n");
        out
    }
}

/// Extracts the call graph. See the module docs for the node and edge
/// inventory and the id assignment order.
pub fn build_call_graph(index: &FactoryIndex) -> CallGraph {
    let started = Instant::now();

    let mut nodes: Vec<GraphNode> = Vec::new();
    let mut edges: BTreeSet<(u32, u32)> = BTreeSet::new();

    let entrypoint_nodes: Vec<u32> = index
        .screens
        .iter()
        .enumerate()
        .map(|(si, info)| {
            let id = nodes.len() as u32;
            nodes.push(GraphNode::Entrypoint {
                screen: si,
                qualified: info.qualified.clone(),
            });
            id
        })
        .collect();
    let action_nodes: Vec<u32> = index
        .actions
        .iter()
        .enumerate()
        .map(|(ai, info)| {
            let id = nodes.len() as u32;
            nodes.push(GraphNode::Action {
                action: ai,
                qualified: info.qualified.clone(),
                orphan: false,
            });
            id
        })
        .collect();

    // Accesses and calls, scanning screens then actions in index order.
    let mut access_ids: HashMap<(u32, usize, AccessMode), u32> = HashMap::new();
    let mut accessed_entities: BTreeSet<usize> = BTreeSet::new();
    let containers: Vec<(u32, ContainerRef)> = entrypoint_nodes
        .iter()
        .enumerate()
        .map(|(si, &id)| (id, ContainerRef::Screen(si)))
        .chain(
            action_nodes
                .iter()
                .enumerate()
                .map(|(ai, &id)| (id, ContainerRef::Action(ai))),
        )
        .collect();

    for &(container_id, container) in &containers {
        let cfg = index.cfg(container);
        for node in &cfg.nodes {
            match node {
                NodeIx::Access { entity, mode } => {
                    let key = (container_id, *entity, *mode);
                    if let std::collections::hash_map::Entry::Vacant(slot) = access_ids.entry(key)
                    {
                        let id = nodes.len() as u32;
                        nodes.push(GraphNode::Access {
                            container: container_id,
                            entity: *entity,
                            mode: *mode,
                        });
                        slot.insert(id);
                        edges.insert((container_id, id));
                        accessed_entities.insert(*entity);
                    }
                }
                NodeIx::Call { action } => {
                    edges.insert((container_id, action_nodes[*action]));
                }
                _ => {}
            }
        }
    }

    let mut entity_nodes: HashMap<usize, u32> = HashMap::new();
    for &entity in &accessed_entities {
        let id = nodes.len() as u32;
        nodes.push(GraphNode::Entity {
            entity,
            name: index.entity_name(entity).to_string(),
        });
        entity_nodes.insert(entity, id);
    }
    for (&(_, entity, _), &access_id) in &access_ids {
        edges.insert((access_id, entity_nodes[&entity]));
    }

    let edges: Vec<(u32, u32)> = edges.into_iter().collect();
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); nodes.len()];
    for &(from, to) in &edges {
        adjacency[from as usize].push(to);
    }

    // Orphan actions: not reachable from any entrypoint.
    let mut reached = vec![false; nodes.len()];
    let mut queue: VecDeque<u32> = VecDeque::new();
    for &ep in &entrypoint_nodes {
        reached[ep as usize] = true;
        queue.push_back(ep);
    }
    while let Some(at) = queue.pop_front() {
        for &next in &adjacency[at as usize] {
            if !reached[next as usize] {
                reached[next as usize] = true;
                queue.push_back(next);
            }
        }
    }
    for (i, node) in nodes.iter_mut().enumerate() {
        if let GraphNode::Action { orphan, .. } = node {
            *orphan = !reached[i];
        }
    }

    let approximate_resident_bytes = approximate_bytes(&nodes, &edges, &adjacency);
    let stats = GraphStats {
        node_count: nodes.len(),
        edge_count: edges.len(),
        build_millis: started.elapsed().as_millis() as u64,
        approximate_resident_bytes,
    };

    CallGraph {
        nodes,
        edges,
        adjacency,
        stats,
        entrypoint_nodes,
        action_nodes,
    }
}

/// Size and cost counters for a built graph.
pub fn graph_stats(graph: &CallGraph) -> GraphStats {
    graph.stats.clone()
}

fn approximate_bytes(
    nodes: &[GraphNode],
    edges: &[(u32, u32)],
    adjacency: &[Vec<u32>],
) -> usize {
    let node_bytes: usize = nodes
        .iter()
        .map(|n| {
            std::mem::size_of::<GraphNode>()
                + match n {
                    GraphNode::Entrypoint { qualified, .. }
                    | GraphNode::Action { qualified, .. } => qualified.len(),
                    GraphNode::Entity { name, .. } => name.len(),
                    GraphNode::Access { .. } => 0,
                }
        })
        .sum();
    let edge_bytes = edges.len() * std::mem::size_of::<(u32, u32)>();
    let adj_bytes: usize = adjacency
        .iter()
        .map(|v| std::mem::size_of::<Vec<u32>>() + v.len() * 4)
        .sum();
    node_bytes + edge_bytes + adj_bytes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::index_factory;
    use crate::ingest::parse_factory;

    /// Screen S calls action A twice; A reads Client.
    const DOUBLE_CALL: &str = r#"{
        "format_version": 1,
        "name": "t",
        "roles": ["Admin"],
        "default_roles": [],
        "entities": [{"name": "Client", "module": "M"}],
        "modules": [{
            "name": "M",
            "screens": [{
                "name": "S",
                "allowed_roles": ["Admin"],
                "cfg": {
                    "nodes": [
                        {"id": "n0", "kind": "start"},
                        {"id": "n1", "kind": "call", "target": "M.A"},
                        {"id": "n2", "kind": "call", "target": "M.A"},
                        {"id": "n3", "kind": "end"}
                    ],
                    "edges": [
                        {"from": "n0", "to": "n1"},
                        {"from": "n1", "to": "n2"},
                        {"from": "n2", "to": "n3"}
                    ]
                }
            }],
            "actions": [{
                "name": "A",
                "cfg": {
                    "nodes": [
                        {"id": "n0", "kind": "start"},
                        {"id": "n1", "kind": "access", "entity": "Client", "mode": "read"},
                        {"id": "n2", "kind": "access", "entity": "Client", "mode": "read"},
                        {"id": "n3", "kind": "end"}
                    ],
                    "edges": [
                        {"from": "n0", "to": "n1"},
                        {"from": "n1", "to": "n2"},
                        {"from": "n2", "to": "n3"}
                    ]
                }
            }]
        }]
    }"#;

    #[test]
    fn duplicate_calls_and_accesses_collapse() {
        // Hand count: S, A, one access node, one entity node = 4 nodes;
        // S->A, A->access, access->Client = 3 edges.
        let factory = parse_factory(DOUBLE_CALL).unwrap();
        let index = index_factory(&factory).unwrap();
        let graph = build_call_graph(&index);
        assert_eq!(graph.nodes.len(), 4);
        assert_eq!(graph.edges.len(), 3);
        let stats = graph_stats(&graph);
        assert_eq!(stats.node_count, 4);
        assert_eq!(stats.edge_count, 3);
        assert!(stats.approximate_resident_bytes > 0);
    }

    #[test]
    fn only_call_and_access_structure_is_represented() {
        let factory = parse_factory(DOUBLE_CALL).unwrap();
        let index = index_factory(&factory).unwrap();
        let graph = build_call_graph(&index);
        for node in &graph.nodes {
            assert!(matches!(
                node,
                GraphNode::Entrypoint { .. }
                    | GraphNode::Action { .. }
                    | GraphNode::Access { .. }
                    | GraphNode::Entity { .. }
            ));
        }
    }

    #[test]
    fn labels_and_dumps_are_stable() {
        let factory = parse_factory(DOUBLE_CALL).unwrap();
        let index = index_factory(&factory).unwrap();
        let a = build_call_graph(&index);
        let b = build_call_graph(&index);
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_dot(), b.to_dot());
        assert_eq!(a.label(0), "M.S");
        assert_eq!(a.label(2), "read:Client@M.A");
        assert!(a.to_dot().contains("n0 -> n1;"));
    }

    const WITH_ORPHAN: &str = r#"{
        "format_version": 1,
        "name": "t",
        "roles": ["Admin"],
        "default_roles": [],
        "entities": [],
        "modules": [{
            "name": "M",
            "screens": [{
                "name": "S",
                "allowed_roles": ["Admin"],
                "cfg": {
                    "nodes": [{"id": "n0", "kind": "start"}, {"id": "n1", "kind": "end"}],
                    "edges": [{"from": "n0", "to": "n1"}]
                }
            }],
            "actions": [{
                "name": "Dead",
                "cfg": {
                    "nodes": [{"id": "n0", "kind": "start"}, {"id": "n1", "kind": "end"}],
                    "edges": [{"from": "n0", "to": "n1"}]
                }
            }]
        }]
    }"#;

    #[test]
    fn unreached_actions_are_flagged_not_dropped() {
        let factory = parse_factory(WITH_ORPHAN).unwrap();
        let index = index_factory(&factory).unwrap();
        let graph = build_call_graph(&index);
        assert_eq!(graph.nodes.len(), 2);
        assert!(matches!(
            graph.nodes[1],
            GraphNode::Action { orphan: true, .. }
        ));
        assert!(graph.to_json().contains("\"orphan\": true"));
    }

    #[test]
    fn unaccessed_entities_get_no_node() {
        let factory = parse_factory(WITH_ORPHAN).unwrap();
        let index = index_factory(&factory).unwrap();
        let graph = build_call_graph(&index);
        assert!(graph
            .nodes
            .iter()
            .all(|n| !matches!(n, GraphNode::Entity { .. })));
    }
}

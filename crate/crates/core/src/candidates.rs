//! Candidate search: which entrypoint/entity/mode triples deserve a closer
//! look?
//!
//! A candidate exists when a screen admits some role outside the policy's
//! role list for an entity and mode (defaults count: every user holds them
//! implicitly) and the call graph offers at least one path from the screen
//! to a matching access. Candidates are purely syntactic; the role-state
//! traversal decides later whether any path is actually feasible.
//!
//! Call paths are enumerated shortest-first (iterative deepening on top of
//! a depth-first walk), keep only simple paths so call cycles terminate,
//! and stop at a configurable cap with an explicit `truncated` marker.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::callgraph::{CallGraph, GraphNode};
use crate::index::{CompiledPolicy, EntityRoles, FactoryIndex, ScreenInfo};
use crate::model::AccessMode;
use crate::roles::RoleSet;

/// One entrypoint/entity/mode triple worth analyzing, with the syntactic
/// call paths that make it reachable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    /// Qualified screen name.
    pub entrypoint: String,
    pub entity: String,
    pub mode: AccessMode,
    /// Roles admitted by the screen (or held by default) that the policy
    /// does not list for this entity and mode.
    pub violating_roles: RoleSet,
    /// Call-graph node id sequences `entrypoint -> … -> access -> entity`,
    /// shortest first.
    pub call_paths: Vec<Vec<u32>>,
    /// More paths existed than the cap allowed.
    pub truncated: bool,
}

/// Roles that could enter the screen yet are outside the policy for this
/// entity and mode: `(allowed ∪ defaults) ∖ rule_roles(mode)`.
pub fn violating_roles(
    entrypoint: &ScreenInfo,
    rule: &EntityRoles,
    mode: AccessMode,
    defaults: &RoleSet,
) -> RoleSet {
    let rule_roles = match mode {
        AccessMode::Read => &rule.read,
        AccessMode::Write => &rule.write,
    };
    let mut set = entrypoint.allowed.union(defaults);
    set.subtract(rule_roles);
    set
}

/// Finds every candidate for `policy`, sorted by (entrypoint, entity,
/// mode). `max_paths` caps the recorded paths per candidate (clamped to at
/// least 1); hitting the cap sets `truncated`.
pub fn find_candidates(
    graph: &CallGraph,
    index: &FactoryIndex,
    policy: &CompiledPolicy,
    max_paths: usize,
) -> Vec<Candidate> {
    let max_paths = max_paths.max(1);
    let mut out = Vec::new();

    // Reverse adjacency once; every distance map below shares it.
    let mut incoming: Vec<Vec<u32>> = vec![Vec::new(); graph.nodes.len()];
    for &(from, to) in &graph.edges {
        incoming[to as usize].push(from);
    }

    // Target masks and distance maps per (entity, mode), shared across
    // screens: any access a screen can reach is in its own target set, so
    // the group-wide map prunes its walks exactly like a per-screen one.
    let mut search_data: BTreeMap<(usize, AccessMode), (Vec<u32>, Vec<bool>)> = BTreeMap::new();

    for (si, screen) in index.screens.iter().enumerate() {
        let ep = graph.entrypoint_nodes[si];
        let reachable = reachable_from(graph, ep);

        // Group reachable, policy-covered accesses by (entity, mode).
        let mut groups: BTreeSet<(usize, AccessMode)> = BTreeSet::new();
        for (node, reached) in reachable.iter().enumerate() {
            if !reached {
                continue;
            }
            if let GraphNode::Access { entity, mode, .. } = &graph.nodes[node] {
                if policy.covers(*entity) {
                    groups.insert((*entity, *mode));
                }
            }
        }

        for (entity, mode) in groups {
            let rule = policy.rule(entity).expect("group only contains covered entities");
            let violating = violating_roles(screen, rule, mode, &index.default_roles);
            if violating.is_empty() {
                continue;
            }
            let (dist, is_target) = search_data.entry((entity, mode)).or_insert_with(|| {
                let targets: Vec<u32> = graph
                    .nodes
                    .iter()
                    .enumerate()
                    .filter(|(_, node)| {
                        matches!(
                            node,
                            GraphNode::Access { entity: e, mode: m, .. }
                                if *e == entity && *m == mode
                        )
                    })
                    .map(|(node, _)| node as u32)
                    .collect();
                let dist = distance_to_any(&incoming, graph.nodes.len(), &targets);
                let mut is_target = vec![false; graph.nodes.len()];
                for &t in &targets {
                    is_target[t as usize] = true;
                }
                (dist, is_target)
            });
            let (call_paths, truncated) = enumerate_paths(graph, ep, dist, is_target, max_paths);
            debug_assert!(!call_paths.is_empty());
            out.push(Candidate {
                entrypoint: screen.qualified.clone(),
                entity: index.entity_name(entity).to_string(),
                mode,
                violating_roles: violating,
                call_paths,
                truncated,
            });
        }
    }

    out.sort_by(|a, b| {
        (a.entrypoint.as_str(), a.entity.as_str(), a.mode)
            .cmp(&(b.entrypoint.as_str(), b.entity.as_str(), b.mode))
    });
    out
}

fn reachable_from(graph: &CallGraph, start: u32) -> Vec<bool> {
    let mut seen = vec![false; graph.nodes.len()];
    let mut stack = vec![start];
    seen[start as usize] = true;
    while let Some(at) = stack.pop() {
        for &next in graph.out(at) {
            if !seen[next as usize] {
                seen[next as usize] = true;
                stack.push(next);
            }
        }
    }
    seen
}

/// All simple paths from `start` to any target, shortest first, capped.
/// Targets arrive as a node mask plus a distance map from
/// [`distance_to_any`]; the walk only descends where the nearest target
/// still fits in the remaining depth budget. A plain can-reach filter is
/// not enough: on wide call DAGs it lets every pass wander through
/// prefixes that have no chance of completing, which gets exponential
/// fast. Each returned path gets the target's entity node appended so it
/// reads `entrypoint -> … -> access -> entity`.
fn enumerate_paths(
    graph: &CallGraph,
    start: u32,
    dist: &[u32],
    is_target: &[bool],
    cap: usize,
) -> (Vec<Vec<u32>>, bool) {
    let mut paths: Vec<Vec<u32>> = Vec::new();
    let mut truncated = false;
    let mut on_path = vec![false; graph.nodes.len()];
    let mut path = Vec::new();

    // Iterative deepening: level d collects exactly the paths with d edges,
    // so the overall order is shortest-first and deterministic.
    for depth in 1..=graph.nodes.len() {
        let mut cut_off = false;
        walk(
            graph,
            start,
            depth,
            dist,
            is_target,
            &mut on_path,
            &mut path,
            &mut paths,
            cap,
            &mut truncated,
            &mut cut_off,
        );
        if truncated || !cut_off {
            break;
        }
    }

    for path in &mut paths {
        let access = *path.last().expect("paths are never empty");
        let entity_node = graph.out(access)[0];
        path.push(entity_node);
    }
    (paths, truncated)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    graph: &CallGraph,
    at: u32,
    budget: usize,
    dist: &[u32],
    is_target: &[bool],
    on_path: &mut [bool],
    path: &mut Vec<u32>,
    paths: &mut Vec<Vec<u32>>,
    cap: usize,
    truncated: &mut bool,
    cut_off: &mut bool,
) {
    if *truncated {
        return;
    }
    path.push(at);
    on_path[at as usize] = true;

    if budget == 0 {
        if is_target[at as usize] {
            if paths.len() == cap {
                *truncated = true;
            } else {
                paths.push(path.clone());
            }
        }
    } else {
        for &next in graph.out(at) {
            if on_path[next as usize] {
                continue;
            }
            let d = dist[next as usize];
            if d == u32::MAX {
                continue;
            }
            if d as usize > budget - 1 {
                // Reachable, just not within this pass's depth; a deeper
                // pass has work to do.
                *cut_off = true;
                continue;
            }
            walk(
                graph, next, budget - 1, dist, is_target, on_path, path, paths, cap, truncated,
                cut_off,
            );
            if *truncated {
                break;
            }
        }
    }

    on_path[at as usize] = false;
    path.pop();
}

/// For each node: can it reach at least one target (following out-edges)?
/// Minimum number of edges from each node to the nearest target, or
/// `u32::MAX` where no target is reachable. Breadth-first over the
/// caller's reversed adjacency.
fn distance_to_any(incoming: &[Vec<u32>], node_count: usize, targets: &[u32]) -> Vec<u32> {
    let mut dist = vec![u32::MAX; node_count];
    let mut queue: VecDeque<u32> = VecDeque::new();
    for &t in targets {
        dist[t as usize] = 0;
        queue.push_back(t);
    }
    while let Some(at) = queue.pop_front() {
        for &prev in &incoming[at as usize] {
            if dist[prev as usize] == u32::MAX {
                dist[prev as usize] = dist[at as usize] + 1;
                queue.push_back(prev);
            }
        }
    }
    dist
}

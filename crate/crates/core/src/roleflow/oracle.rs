//! Brute-force reference analysis for small instances.
//!
//! [`oracle_analyze`] answers the same question as
//! [`analyze_candidate`](super::analyze_candidate) by enumerating every
//! interprocedurally inlined path from the entrypoint, with no summaries
//! and no memoization: each call site re-explores its callee from scratch.
//! Loops are cut when a (node, state) pair repeats within the current
//! frame's path. Recursive descents into an (action, entry-state) pair
//! already on the call stack are allowed up to an unrolling bound, and the
//! bound is raised until two consecutive rounds agree on everything
//! observable, which pins the fixpoint exactly.
//!
//! The point of this module is to disagree with the traversal if the
//! traversal is wrong; tests hold their flaw tuples equal on generated
//! instances.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{branch_implications, flaw_at_access, FlawTuple, RoleState};
use crate::candidates::Candidate;
use crate::index::{CompiledPolicy, ContainerRef, ElementRef, EntityRoles, FactoryIndex, NodeIx};
use crate::model::{AccessMode, BranchLabel};
use crate::roles::RoleSet;

/// Bounds that keep exhaustive enumeration tractable. Instances beyond
/// them are rejected, never silently truncated.
#[derive(Debug, Clone)]
pub struct OracleLimits {
    /// Cap on roles that can influence the analysis.
    pub max_relevant_roles: usize,
    /// Cap on the summed node count of every container reachable through
    /// calls from the entrypoint.
    pub max_inlined_nodes: usize,
    /// Cap on call-stack depth, entrypoint frame included.
    pub max_call_depth: usize,
    /// Entailment budget; keep equal to the traversal's when comparing.
    pub max_atoms: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_relevant_roles: 8,
            max_inlined_nodes: 200,
            max_call_depth: 8,
            max_atoms: 16,
        }
    }
}

/// The instance exceeds what exhaustive enumeration can afford.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("instance too large for the oracle: {0}")]
pub struct InstanceTooLarge(pub String);

/// Nesting cap for one inlined path; beyond this the instance is rejected.
const MAX_PATH_NESTING: usize = 4000;
/// Cap on unrolling rounds before giving up on stabilization.
const MAX_ROUNDS: usize = 32;

/// Everything one enumeration round observes. Two equal rounds mean the
/// unrolling bound no longer matters.
#[derive(Debug, PartialEq, Eq)]
struct RoundOutput {
    /// Violating-role sets per access node.
    fired: BTreeMap<(ContainerRef, usize), BTreeSet<RoleSet>>,
    /// Every (container, frame entry state, node, state) configuration
    /// reached.
    reached: BTreeSet<(ContainerRef, RoleState, usize, RoleState)>,
    too_deep: bool,
    too_long: bool,
}

struct Walker<'a, 'f> {
    index: &'a FactoryIndex<'f>,
    target_entity: usize,
    target_mode: AccessMode,
    rule: &'a EntityRoles,
    max_atoms: usize,
    max_call_depth: usize,
    unroll: usize,
    out: RoundOutput,
}

/// Exhaustively re-derives the flaw tuples for `candidate`.
///
/// Returns the set of (entrypoint, entity, mode, violating-roles) tuples,
/// reduced to maximal violating sets per access node, exactly like the
/// traversal's findings project through
/// [`finding_tuples`](super::finding_tuples).
pub fn oracle_analyze(
    index: &FactoryIndex<'_>,
    candidate: &Candidate,
    policy: &CompiledPolicy,
    limits: &OracleLimits,
) -> Result<BTreeSet<FlawTuple>, InstanceTooLarge> {
    let Some(ElementRef::Screen(si)) = index.lookup(&candidate.entrypoint) else {
        panic!("candidate entrypoint `{}` is not a screen", candidate.entrypoint);
    };
    let entity = index
        .entity_id(&candidate.entity)
        .expect("candidate entity exists");
    let rule = policy.rule(entity).expect("candidate entity has a rule");

    let relevant = index.relevant_with(policy);
    if relevant.len() > limits.max_relevant_roles {
        return Err(InstanceTooLarge(format!(
            "{} relevant roles exceed the cap of {}",
            relevant.len(),
            limits.max_relevant_roles
        )));
    }
    let inlined = inlined_node_count(index, si);
    if inlined > limits.max_inlined_nodes {
        return Err(InstanceTooLarge(format!(
            "{inlined} reachable CFG nodes exceed the cap of {}",
            limits.max_inlined_nodes
        )));
    }

    let initial = RoleState {
        has: index.universe.empty_set(),
        may: index.screens[si].allowed.union(&index.default_roles),
    };

    let mut previous: Option<RoundOutput> = None;
    for unroll in 1..=MAX_ROUNDS {
        let round = run_round(index, si, &initial, entity, candidate.mode, rule, limits, unroll)?;
        if previous.as_ref() == Some(&round) {
            return Ok(project(&round, candidate));
        }
        previous = Some(round);
    }
    Err(InstanceTooLarge(format!(
        "recursion did not stabilize within {MAX_ROUNDS} unrolling rounds"
    )))
}

/// Summed node count over every container reachable through calls.
fn inlined_node_count(index: &FactoryIndex<'_>, screen: usize) -> usize {
    let root = ContainerRef::Screen(screen);
    let mut seen = BTreeSet::from([root]);
    let mut queue = vec![root];
    let mut total = 0;
    while let Some(container) = queue.pop() {
        let cfg = index.cfg(container);
        total += cfg.nodes.len();
        for node in &cfg.nodes {
            if let NodeIx::Call { action } = node {
                let callee = ContainerRef::Action(*action);
                if seen.insert(callee) {
                    queue.push(callee);
                }
            }
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn run_round(
    index: &FactoryIndex<'_>,
    screen: usize,
    initial: &RoleState,
    target_entity: usize,
    target_mode: AccessMode,
    rule: &EntityRoles,
    limits: &OracleLimits,
    unroll: usize,
) -> Result<RoundOutput, InstanceTooLarge> {
    let mut walker = Walker {
        index,
        target_entity,
        target_mode,
        rule,
        max_atoms: limits.max_atoms,
        max_call_depth: limits.max_call_depth,
        unroll,
        out: RoundOutput {
            fired: BTreeMap::new(),
            reached: BTreeSet::new(),
            too_deep: false,
            too_long: false,
        },
    };
    let root = ContainerRef::Screen(screen);
    let mut trace = Vec::new();
    let mut stack = vec![(root, initial.clone())];
    let mut exits = BTreeSet::new();
    walker.walk(
        root,
        initial,
        index.cfg(root).start,
        initial.clone(),
        &mut trace,
        &mut stack,
        1,
        &mut exits,
    );
    if walker.out.too_deep {
        return Err(InstanceTooLarge(format!(
            "call depth exceeds the cap of {}",
            limits.max_call_depth
        )));
    }
    if walker.out.too_long {
        return Err(InstanceTooLarge(format!(
            "an inlined path exceeds {MAX_PATH_NESTING} steps"
        )));
    }
    Ok(walker.out)
}

impl Walker<'_, '_> {
    #[allow(clippy::too_many_arguments)]
    fn walk(
        &mut self,
        container: ContainerRef,
        entry: &RoleState,
        node: usize,
        state: RoleState,
        trace: &mut Vec<(usize, RoleState)>,
        stack: &mut Vec<(ContainerRef, RoleState)>,
        nesting: usize,
        exits: &mut BTreeSet<RoleState>,
    ) {
        if nesting > MAX_PATH_NESTING {
            self.out.too_long = true;
            return;
        }
        if trace.iter().any(|(n, s)| *n == node && *s == state) {
            return;
        }
        trace.push((node, state.clone()));
        self.out
            .reached
            .insert((container, entry.clone(), node, state.clone()));

        let cfg = self.index.cfg(container);
        let node_ix = cfg.nodes[node].clone();
        match &node_ix {
            NodeIx::Access {
                entity,
                mode,
            } => {
                if *entity == self.target_entity && *mode == self.target_mode {
                    if let Some(violating) = flaw_at_access(&state, self.rule, *mode) {
                        self.out
                            .fired
                            .entry((container, node))
                            .or_default()
                            .insert(violating);
                    }
                }
                for succ in &cfg.succs[node] {
                    self.walk(
                        container,
                        entry,
                        succ.node,
                        state.clone(),
                        trace,
                        stack,
                        nesting + 1,
                        exits,
                    );
                }
            }
            NodeIx::Cond { condition } => {
                for succ in &cfg.succs[node] {
                    let Some(label) = succ.label else { continue };
                    let implications = branch_implications(
                        condition,
                        label == BranchLabel::True,
                        self.max_atoms,
                        &self.index.universe,
                    );
                    if let Some(next) =
                        super::apply_transfer(&state, &node_ix, Some(&implications))
                    {
                        self.walk(
                            container,
                            entry,
                            succ.node,
                            next,
                            trace,
                            stack,
                            nesting + 1,
                            exits,
                        );
                    }
                }
            }
            NodeIx::Grant { .. } | NodeIx::Revoke { .. } => {
                let next = super::apply_transfer(&state, &node_ix, None)
                    .expect("grant and revoke are always feasible");
                for succ in &cfg.succs[node] {
                    self.walk(
                        container,
                        entry,
                        succ.node,
                        next.clone(),
                        trace,
                        stack,
                        nesting + 1,
                        exits,
                    );
                }
            }
            NodeIx::Call { action } => {
                let callee = ContainerRef::Action(*action);
                let occurrences = stack
                    .iter()
                    .filter(|(c, e)| *c == callee && *e == state)
                    .count();
                if occurrences < self.unroll {
                    if stack.len() + 1 > self.max_call_depth {
                        self.out.too_deep = true;
                    } else {
                        stack.push((callee, state.clone()));
                        let mut callee_trace = Vec::new();
                        let mut callee_exits = BTreeSet::new();
                        let callee_start = self.index.cfg(callee).start;
                        self.walk(
                            callee,
                            &state,
                            callee_start,
                            state.clone(),
                            &mut callee_trace,
                            stack,
                            nesting + 1,
                            &mut callee_exits,
                        );
                        stack.pop();
                        for exit in callee_exits {
                            for succ in &cfg.succs[node] {
                                self.walk(
                                    container,
                                    entry,
                                    succ.node,
                                    exit.clone(),
                                    trace,
                                    stack,
                                    nesting + 1,
                                    exits,
                                );
                            }
                        }
                    }
                }
            }
            NodeIx::End => {
                exits.insert(state.clone());
            }
            NodeIx::Start | NodeIx::Other => {
                for succ in &cfg.succs[node] {
                    self.walk(
                        container,
                        entry,
                        succ.node,
                        state.clone(),
                        trace,
                        stack,
                        nesting + 1,
                        exits,
                    );
                }
            }
        }

        trace.pop();
    }
}

/// Maximal violating sets per access node, projected to flaw tuples.
fn project(round: &RoundOutput, candidate: &Candidate) -> BTreeSet<FlawTuple> {
    let mut tuples = BTreeSet::new();
    for sets in round.fired.values() {
        for violating in sets {
            let maximal = !sets
                .iter()
                .any(|other| other != violating && violating.is_subset(other));
            if maximal {
                tuples.insert((
                    candidate.entrypoint.clone(),
                    candidate.entity.clone(),
                    candidate.mode,
                    violating.clone(),
                ));
            }
        }
    }
    tuples
}

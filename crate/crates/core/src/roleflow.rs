//! Role-state traversal: decides which candidates are real findings.
//!
//! The traversal walks a candidate's entrypoint CFG with a [`RoleState`]
//! (roles the user definitely has, roles they may have), descends into
//! called actions, and fires a finding when an access is reachable in a
//! state whose `may` set leaks outside the policy while `has` holds none of
//! the allowed roles.
//!
//! Calls are handled with summaries: each (action, entry-state) pair is
//! explored once, its exit states recorded and replayed at every call site
//! that reaches it with that state. Recursion therefore terminates by
//! construction: the summary space is finite, and no (action, node, state)
//! triple is expanded twice. Witnesses keep the first discovery path and
//! elide the bodies of calls that merely completed along the way.
//!
//! [`oracle::oracle_analyze`] re-derives the same verdicts by brute-force
//! path enumeration on small instances; tests hold the two routes equal.

pub mod oracle;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::candidates::Candidate;
use crate::index::{CompiledPolicy, ContainerRef, ElementRef, EntityRoles, FactoryIndex, NodeIx};
use crate::model::{condition_atoms, AccessMode, BranchLabel, Condition};
use crate::roles::{RoleSet, RoleUniverse};

/// Knobs for the traversal. `max_paths` lives here too so one struct can
/// ride through the whole pipeline; the candidate search is its consumer.
#[derive(Debug, Clone)]
pub struct Limits {
    /// Conditions with more than this many distinct atoms are treated
    /// conservatively instead of enumerated (cost is 2^atoms).
    pub max_atoms: usize,
    /// Cap on memoized (action, node, state) triples per candidate; hitting
    /// it yields a partial result marked incomplete.
    pub max_summary_states: usize,
    /// Cap on recorded call paths per candidate.
    pub max_paths: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_atoms: 16,
            max_summary_states: 100_000,
            max_paths: 1000,
        }
    }
}

/// What is known about the user's roles at one program point.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoleState {
    /// Roles the user definitely holds here.
    pub has: RoleSet,
    /// Roles the user could possibly hold here; always a superset of `has`.
    pub may: RoleSet,
}

/// What taking one branch of a condition says about the user's roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchImplications {
    /// Roles that must be held on this branch.
    pub entailed_true: RoleSet,
    /// Roles that must be absent on this branch.
    pub entailed_false: RoleSet,
    /// False when the branch can never be taken at all.
    pub satisfiable: bool,
}

/// One step of a witness trace: a node inside a named screen or action.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WitnessStep {
    /// Qualified screen or action name.
    pub container: String,
    /// CFG node id within that container.
    pub node: String,
}

/// A confirmed access-control flaw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    /// Qualified screen the attacker enters through.
    pub entrypoint: String,
    pub entity: String,
    pub mode: AccessMode,
    /// Roles that can reach the access yet are outside the policy; always
    /// `state_at_access.may` minus the policy roles, never empty.
    pub violating_roles: RoleSet,
    pub state_at_access: RoleState,
    /// First discovery path, node by node, ending at the access. Bodies of
    /// calls that completed along the way are elided; their call sites stay.
    pub witness: Vec<WitnessStep>,
    /// The confirmed route, container by container: entrypoint, the actions
    /// descended into, the access, the entity.
    pub call_path: Vec<String>,
}

/// Result of analyzing one candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateAnalysis {
    pub findings: Vec<Finding>,
    /// True when `max_summary_states` was exhausted and the findings are
    /// only a lower bound.
    pub incomplete: bool,
}

/// Finding identity used when comparing analysis routes: (entrypoint,
/// entity, mode, violating roles).
pub type FlawTuple = (String, String, AccessMode, RoleSet);

/// Projects findings to their comparison tuples.
pub fn finding_tuples(findings: &[Finding]) -> BTreeSet<FlawTuple> {
    findings
        .iter()
        .map(|f| {
            (
                f.entrypoint.clone(),
                f.entity.clone(),
                f.mode,
                f.violating_roles.clone(),
            )
        })
        .collect()
}

/// Computes what taking `branch` of `cond` implies about the user's roles.
///
/// Enumerates every truth assignment over the condition's distinct
/// check-role and opaque atoms: a role is entailed true (false) when it is
/// true (false) in every assignment satisfying the branch. Opaque atoms are
/// never entailed, and neither is a check-role naming an undeclared role.
/// Conditions with more than `max_atoms` atoms are not enumerated; the
/// result is then fully conservative (satisfiable, nothing entailed).
pub fn branch_implications(
    cond: &Condition,
    branch: bool,
    max_atoms: usize,
    universe: &RoleUniverse,
) -> BranchImplications {
    let (roles, opaques) = condition_atoms(cond);
    let atom_count = roles.len() + opaques.len();
    let conservative = BranchImplications {
        entailed_true: universe.empty_set(),
        entailed_false: universe.empty_set(),
        satisfiable: true,
    };
    if atom_count > max_atoms || atom_count >= u64::BITS as usize {
        return conservative;
    }

    let mut bit_of: HashMap<&str, u32> = HashMap::new();
    for (i, name) in roles.iter().chain(opaques.iter()).enumerate() {
        bit_of.insert(name.as_str(), i as u32);
    }

    let mut any_sat = false;
    // Bit i of these masks tracks whether role atom i held in every
    // satisfying assignment (resp. was false in every one).
    let mut all_true = !0u64;
    let mut all_false = !0u64;
    for assignment in 0..(1u64 << atom_count) {
        let value = eval_condition(cond, &bit_of, assignment);
        if value == branch {
            any_sat = true;
            all_true &= assignment;
            all_false &= !assignment;
        }
    }
    if !any_sat {
        return BranchImplications {
            satisfiable: false,
            ..conservative
        };
    }

    let mut entailed_true = universe.empty_set();
    let mut entailed_false = universe.empty_set();
    for (i, name) in roles.iter().enumerate() {
        let Some(role) = universe.id(name) else {
            continue;
        };
        if all_true & (1 << i) != 0 {
            entailed_true.insert(role);
        }
        if all_false & (1 << i) != 0 {
            entailed_false.insert(role);
        }
    }
    BranchImplications {
        entailed_true,
        entailed_false,
        satisfiable: true,
    }
}

fn eval_condition(cond: &Condition, bit_of: &HashMap<&str, u32>, assignment: u64) -> bool {
    match cond {
        Condition::CheckRole { role } => assignment & (1 << bit_of[role.as_str()]) != 0,
        Condition::Opaque { id } => assignment & (1 << bit_of[id.as_str()]) != 0,
        Condition::Not { arg } => !eval_condition(arg, bit_of, assignment),
        Condition::And { args } => args.iter().all(|a| eval_condition(a, bit_of, assignment)),
        Condition::Or { args } => args.iter().any(|a| eval_condition(a, bit_of, assignment)),
    }
}

/// Applies one node's effect to a state. `implications` must be given
/// exactly when `node` is a condition (they encode which branch is taken).
/// Returns `None` when the branch is infeasible in this state.
pub fn apply_transfer(
    state: &RoleState,
    node: &NodeIx<'_>,
    implications: Option<&BranchImplications>,
) -> Option<RoleState> {
    match node {
        NodeIx::Grant { role } => {
            let mut next = state.clone();
            next.has.insert(*role);
            next.may.insert(*role);
            Some(next)
        }
        NodeIx::Revoke { role } => {
            let mut next = state.clone();
            next.has.remove(*role);
            next.may.remove(*role);
            Some(next)
        }
        NodeIx::Cond { .. } => {
            let implications = implications.expect("cond transfer requires branch implications");
            if !implications.satisfiable
                || !implications.entailed_true.is_subset(&state.may)
                || !implications.entailed_false.is_disjoint(&state.has)
            {
                return None;
            }
            let mut next = state.clone();
            next.has.union_with(&implications.entailed_true);
            next.may.subtract(&implications.entailed_false);
            Some(next)
        }
        NodeIx::Start
        | NodeIx::End
        | NodeIx::Other
        | NodeIx::Call { .. }
        | NodeIx::Access { .. } => Some(state.clone()),
    }
}

/// Checks an access against the policy roles for its mode. Returns the
/// violating roles (`may` minus the rule's roles) when the user might reach
/// this access without definitely holding any allowed role.
pub fn flaw_at_access(
    state: &RoleState,
    rule: &EntityRoles,
    mode: AccessMode,
) -> Option<RoleSet> {
    let allowed = match mode {
        AccessMode::Read => &rule.read,
        AccessMode::Write => &rule.write,
    };
    if !state.has.is_disjoint(allowed) {
        return None;
    }
    let violating = state.may.difference(allowed);
    if violating.is_empty() {
        None
    } else {
        Some(violating)
    }
}

type TupleId = u32;
type InstanceId = u32;

struct TupleData {
    instance: InstanceId,
    node: u32,
    state: RoleState,
    parent: Option<TupleId>,
}

struct InstanceData {
    container: ContainerRef,
    exits: BTreeSet<RoleState>,
    /// Call-node tuples waiting on this instance's exits.
    callers: Vec<TupleId>,
}

struct Traversal<'a, 'f> {
    index: &'a FactoryIndex<'f>,
    target_entity: usize,
    target_mode: AccessMode,
    rule: &'a EntityRoles,
    max_atoms: usize,
    max_summary_states: usize,
    tuples: Vec<TupleData>,
    visited: HashMap<(InstanceId, u32, RoleState), TupleId>,
    instances: Vec<InstanceData>,
    instance_ids: HashMap<(ContainerRef, RoleState), InstanceId>,
    worklist: Vec<TupleId>,
    implication_cache: HashMap<(ContainerRef, u32, bool), BranchImplications>,
    /// Violating-role sets fired per access node, in discovery order.
    fired: BTreeMap<(ContainerRef, u32), Vec<(RoleSet, TupleId)>>,
    incomplete: bool,
}

/// Decides whether `candidate` is a real flaw by traversing every feasible
/// role state reachable from its entrypoint.
///
/// The entry state is has = ∅, may = the screen's allowed roles plus the
/// default roles. One finding is emitted per access node and maximal
/// violating-role set observed there, carrying the first discovery path as
/// its witness. Exhausting `limits.max_summary_states` marks the result
/// incomplete instead of dropping it.
///
/// The factory must have passed [`crate::model::validate_factory`].
pub fn analyze_candidate(
    index: &FactoryIndex<'_>,
    candidate: &Candidate,
    policy: &CompiledPolicy,
    limits: &Limits,
) -> CandidateAnalysis {
    let Some(ElementRef::Screen(si)) = index.lookup(&candidate.entrypoint) else {
        panic!("candidate entrypoint `{}` is not a screen", candidate.entrypoint);
    };
    let entity = index
        .entity_id(&candidate.entity)
        .expect("candidate entity exists");
    let rule = policy.rule(entity).expect("candidate entity has a rule");
    let screen = &index.screens[si];

    let initial = RoleState {
        has: index.universe.empty_set(),
        may: screen.allowed.union(&index.default_roles),
    };
    debug_assert!(initial.may.is_subset(&index.relevant_with(policy)));

    let mut traversal = Traversal {
        index,
        target_entity: entity,
        target_mode: candidate.mode,
        rule,
        max_atoms: limits.max_atoms,
        max_summary_states: limits.max_summary_states,
        tuples: Vec::new(),
        visited: HashMap::new(),
        instances: Vec::new(),
        instance_ids: HashMap::new(),
        worklist: Vec::new(),
        implication_cache: HashMap::new(),
        fired: BTreeMap::new(),
        incomplete: false,
    };

    let root = traversal.instance(ContainerRef::Screen(si), &initial);
    let start = index.screens[si].cfg.start as u32;
    traversal.push_tuple(root, start, initial, None);
    while let Some(t) = traversal.worklist.pop() {
        traversal.step(t);
    }

    let findings = traversal.collect_findings(candidate);
    CandidateAnalysis {
        findings,
        incomplete: traversal.incomplete,
    }
}

impl Traversal<'_, '_> {
    fn instance(&mut self, container: ContainerRef, entry: &RoleState) -> InstanceId {
        if let Some(&id) = self.instance_ids.get(&(container, entry.clone())) {
            return id;
        }
        let id = self.instances.len() as InstanceId;
        self.instances.push(InstanceData {
            container,
            exits: BTreeSet::new(),
            callers: Vec::new(),
        });
        self.instance_ids.insert((container, entry.clone()), id);
        id
    }

    fn push_tuple(
        &mut self,
        instance: InstanceId,
        node: u32,
        state: RoleState,
        parent: Option<TupleId>,
    ) {
        debug_assert!(state.has.is_subset(&state.may));
        let key = (instance, node, state);
        if self.visited.contains_key(&key) {
            return;
        }
        if self.visited.len() >= self.max_summary_states {
            self.incomplete = true;
            return;
        }
        let id = self.tuples.len() as TupleId;
        let (instance, node, state) = key;
        self.visited.insert((instance, node, state.clone()), id);
        self.tuples.push(TupleData {
            instance,
            node,
            state,
            parent,
        });
        self.worklist.push(id);
    }

    fn step(&mut self, t: TupleId) {
        let tuple = &self.tuples[t as usize];
        let instance = tuple.instance;
        let node = tuple.node;
        let state = tuple.state.clone();
        let container = self.instances[instance as usize].container;
        let cfg = self.index.cfg(container);
        let node_ix = cfg.nodes[node as usize].clone();

        match &node_ix {
            NodeIx::Access { entity, mode } => {
                if *entity == self.target_entity && *mode == self.target_mode {
                    if let Some(violating) = flaw_at_access(&state, self.rule, *mode) {
                        let entries = self.fired.entry((container, node)).or_default();
                        if !entries.iter().any(|(v, _)| *v == violating) {
                            entries.push((violating, t));
                        }
                    }
                }
                self.push_successors(instance, node, &state, t, cfg);
            }
            NodeIx::Cond { condition } => {
                let index = self.index;
                let max_atoms = self.max_atoms;
                let succs = cfg.succs[node as usize].clone();
                for succ in succs {
                    let Some(label) = succ.label else {
                        debug_assert!(false, "cond edge without a label");
                        continue;
                    };
                    let branch = label == BranchLabel::True;
                    let implications = self
                        .implication_cache
                        .entry((container, node, branch))
                        .or_insert_with(|| {
                            branch_implications(condition, branch, max_atoms, &index.universe)
                        })
                        .clone();
                    if let Some(next) = apply_transfer(&state, &node_ix, Some(&implications)) {
                        self.push_tuple(instance, succ.node as u32, next, Some(t));
                    }
                }
            }
            NodeIx::Grant { .. } | NodeIx::Revoke { .. } => {
                let next = apply_transfer(&state, &node_ix, None)
                    .expect("grant and revoke are always feasible");
                self.push_successors(instance, node, &next, t, cfg);
            }
            NodeIx::Call { action } => {
                let callee_container = ContainerRef::Action(*action);
                let callee = self.instance(callee_container, &state);
                let callee_start = self.index.cfg(callee_container).start as u32;
                self.push_tuple(callee, callee_start, state.clone(), Some(t));
                self.instances[callee as usize].callers.push(t);
                let exits: Vec<RoleState> =
                    self.instances[callee as usize].exits.iter().cloned().collect();
                for exit in exits {
                    self.push_successors(instance, node, &exit, t, cfg);
                }
            }
            NodeIx::End => {
                if self.instances[instance as usize].exits.insert(state.clone()) {
                    let callers = self.instances[instance as usize].callers.clone();
                    for caller in callers {
                        let caller_tuple = &self.tuples[caller as usize];
                        let caller_instance = caller_tuple.instance;
                        let caller_node = caller_tuple.node;
                        let caller_container =
                            self.instances[caller_instance as usize].container;
                        let caller_cfg = self.index.cfg(caller_container);
                        self.push_successors(
                            caller_instance,
                            caller_node,
                            &state,
                            caller,
                            caller_cfg,
                        );
                    }
                }
            }
            NodeIx::Start | NodeIx::Other => {
                self.push_successors(instance, node, &state, t, cfg);
            }
        }
    }

    fn push_successors(
        &mut self,
        instance: InstanceId,
        node: u32,
        state: &RoleState,
        parent: TupleId,
        cfg: &crate::index::CfgIndex<'_>,
    ) {
        let succs = cfg.succs[node as usize].clone();
        for succ in succs {
            self.push_tuple(instance, succ.node as u32, state.clone(), Some(parent));
        }
    }

    fn collect_findings(&self, candidate: &Candidate) -> Vec<Finding> {
        let mut findings = Vec::new();
        for ((container, _node), entries) in &self.fired {
            let mut maximal: Vec<(RoleSet, TupleId)> = Vec::new();
            for (violating, t) in entries {
                if entries
                    .iter()
                    .any(|(other, _)| other != violating && violating.is_subset(other))
                {
                    continue;
                }
                maximal.push((violating.clone(), *t));
            }
            maximal.sort_by(|a, b| a.0.cmp(&b.0));
            for (violating, t) in maximal {
                let witness = self.witness_of(t);
                let access_label = format!(
                    "{}:{}@{}",
                    candidate.mode,
                    candidate.entity,
                    self.index.qualified(*container)
                );
                let mut call_path: Vec<String> = Vec::new();
                for step in &witness {
                    if call_path.last() != Some(&step.container) {
                        call_path.push(step.container.clone());
                    }
                }
                call_path.push(access_label);
                call_path.push(candidate.entity.clone());
                findings.push(Finding {
                    entrypoint: candidate.entrypoint.clone(),
                    entity: candidate.entity.clone(),
                    mode: candidate.mode,
                    violating_roles: violating,
                    state_at_access: self.tuples[t as usize].state.clone(),
                    witness,
                    call_path,
                });
            }
        }
        findings
    }

    fn witness_of(&self, t: TupleId) -> Vec<WitnessStep> {
        let mut steps = Vec::new();
        let mut cursor = Some(t);
        while let Some(id) = cursor {
            let tuple = &self.tuples[id as usize];
            let container = self.instances[tuple.instance as usize].container;
            let cfg = self.index.cfg(container);
            steps.push(WitnessStep {
                container: self.index.qualified(container).to_string(),
                node: cfg.node_id(tuple.node as usize).to_string(),
            });
            cursor = tuple.parent;
        }
        steps.reverse();
        steps
    }
}

#[cfg(test)]
pub(crate) mod testkit {
    //! Shared builders for analysis tests: construct factories directly
    //! instead of going through JSON.

    use std::collections::BTreeMap;

    use crate::ingest::{Policy, PolicyRule};
    use crate::model::{
        ActionDef, BranchLabel, Cfg, CfgEdge, CfgNode, Condition, Entity, Entrypoint, Factory,
        ModuleDef, NodeKind, FORMAT_VERSION,
    };

    pub fn node(id: &str, kind: NodeKind) -> CfgNode {
        CfgNode {
            id: id.to_string(),
            kind,
        }
    }

    pub fn edge(from: &str, to: &str) -> CfgEdge {
        CfgEdge {
            from: from.to_string(),
            to: to.to_string(),
            label: None,
        }
    }

    pub fn branch(from: &str, to: &str, label: BranchLabel) -> CfgEdge {
        CfgEdge {
            from: from.to_string(),
            to: to.to_string(),
            label: Some(label),
        }
    }

    /// A straight-line CFG threading the given nodes in order, with start
    /// and end added around them.
    pub fn linear(middle: Vec<CfgNode>) -> Cfg {
        let mut nodes = vec![node("start", NodeKind::Start)];
        nodes.extend(middle);
        nodes.push(node("end", NodeKind::End));
        let edges = nodes
            .windows(2)
            .map(|w| edge(&w[0].id, &w[1].id))
            .collect();
        Cfg { nodes, edges }
    }

    pub fn screen(name: &str, allowed: &[&str], cfg: Cfg) -> Entrypoint {
        Entrypoint {
            name: name.to_string(),
            allowed_roles: allowed.iter().map(|s| s.to_string()).collect(),
            cfg,
        }
    }

    pub fn action(name: &str, cfg: Cfg) -> ActionDef {
        ActionDef {
            name: name.to_string(),
            cfg,
        }
    }

    pub fn call(id: &str, target: &str) -> CfgNode {
        node(
            id,
            NodeKind::Call {
                target: target.to_string(),
            },
        )
    }

    pub fn access(id: &str, entity: &str, mode: crate::model::AccessMode) -> CfgNode {
        node(
            id,
            NodeKind::Access {
                entity: entity.to_string(),
                mode,
            },
        )
    }

    pub fn grant(id: &str, role: &str) -> CfgNode {
        node(
            id,
            NodeKind::Grant {
                role: role.to_string(),
            },
        )
    }

    pub fn check(role: &str) -> Condition {
        Condition::CheckRole {
            role: role.to_string(),
        }
    }

    pub fn opaque(id: &str) -> Condition {
        Condition::Opaque { id: id.to_string() }
    }

    pub fn factory(
        roles: &[&str],
        defaults: &[&str],
        entities: &[(&str, &str)],
        modules: Vec<ModuleDef>,
    ) -> Factory {
        Factory {
            format_version: FORMAT_VERSION,
            name: "test".to_string(),
            roles: roles.iter().map(|s| s.to_string()).collect(),
            default_roles: defaults.iter().map(|s| s.to_string()).collect(),
            entities: entities
                .iter()
                .map(|(name, module)| Entity {
                    name: name.to_string(),
                    module: module.to_string(),
                })
                .collect(),
            modules,
        }
    }

    pub fn module(
        name: &str,
        screens: Vec<Entrypoint>,
        actions: Vec<ActionDef>,
    ) -> ModuleDef {
        ModuleDef {
            name: name.to_string(),
            screens,
            actions,
        }
    }

    /// Policy from (entity, read roles, write roles) triples.
    pub fn policy(rules: &[(&str, &[&str], &[&str])]) -> Policy {
        let mut map = BTreeMap::new();
        for (entity, read, write) in rules {
            map.insert(
                entity.to_string(),
                PolicyRule {
                    entity: entity.to_string(),
                    read: read.iter().map(|s| s.to_string()).collect(),
                    write: write.iter().map(|s| s.to_string()).collect(),
                },
            );
        }
        Policy { rules: map }
    }
}

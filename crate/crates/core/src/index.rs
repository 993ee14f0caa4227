//! Pre-resolved view of a factory for fast traversal.
//!
//! [`index_factory`] interns the role universe, assigns every screen and
//! action a dense container index, resolves call targets, entity names, and
//! role names inside each CFG, and precomputes successor lists. Later
//! stages never touch strings on hot paths.
//!
//! The index assumes the factory passed [`crate::model::validate_factory`];
//! if validation was skipped and a reference dangles, indexing fails with
//! an error instead of panicking.

use std::collections::HashMap;

use thiserror::Error;

use crate::ingest::Policy;
use crate::model::{
    resolve_call_target, AccessMode, BranchLabel, CallResolution, Cfg, Condition, Factory,
    NodeKind,
};
use crate::roles::{RoleId, RoleSet, RoleUniverse};

/// Raised when indexing hits a reference that validation would have caught.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct IndexError {
    pub path: String,
    pub message: String,
}

fn dangling(path: impl Into<String>, message: impl Into<String>) -> IndexError {
    IndexError {
        path: path.into(),
        message: message.into(),
    }
}

/// Identifies a screen or action by its dense container index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContainerRef {
    Screen(usize),
    Action(usize),
}

/// Result of a qualified-name lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementRef {
    Screen(usize),
    Action(usize),
}

/// One CFG node with every name reference resolved.
#[derive(Debug, Clone)]
pub enum NodeIx<'a> {
    Start,
    End,
    Other,
    Cond { condition: &'a Condition },
    /// Container index of the callee action.
    Call { action: usize },
    Access { entity: usize, mode: AccessMode },
    Grant { role: RoleId },
    Revoke { role: RoleId },
}

#[derive(Debug, Clone, Copy)]
pub struct Succ {
    pub node: usize,
    pub label: Option<BranchLabel>,
}

/// Indexed control-flow graph: nodes by position, successor lists in a
/// fixed deterministic order (a cond's `true` edge before its `false`
/// edge).
#[derive(Debug)]
pub struct CfgIndex<'a> {
    pub raw: &'a Cfg,
    pub start: usize,
    pub nodes: Vec<NodeIx<'a>>,
    pub succs: Vec<Vec<Succ>>,
}

impl CfgIndex<'_> {
    pub fn node_id(&self, ix: usize) -> &str {
        &self.raw.nodes[ix].id
    }
}

#[derive(Debug)]
pub struct ScreenInfo<'a> {
    pub module: usize,
    pub screen: usize,
    pub qualified: String,
    pub allowed: RoleSet,
    pub cfg: CfgIndex<'a>,
}

#[derive(Debug)]
pub struct ActionInfo<'a> {
    pub module: usize,
    pub action: usize,
    pub qualified: String,
    pub cfg: CfgIndex<'a>,
}

/// Fast lookups over one factory. Borrowed, cheap to rebuild.
#[derive(Debug)]
pub struct FactoryIndex<'a> {
    pub factory: &'a Factory,
    pub universe: RoleUniverse,
    /// Default roles as a set over `universe`.
    pub default_roles: RoleSet,
    /// Roles that can influence the analysis: defaults, entrypoint
    /// allowed_roles, and every role named by a grant, revoke, or
    /// check_role. Policy roles are added per run via
    /// [`FactoryIndex::relevant_with`].
    pub relevant_roles: RoleSet,
    pub screens: Vec<ScreenInfo<'a>>,
    pub actions: Vec<ActionInfo<'a>>,
    by_qualified: HashMap<String, ElementRef>,
    entity_ids: HashMap<&'a str, usize>,
}

impl<'a> FactoryIndex<'a> {
    pub fn lookup(&self, qualified: &str) -> Option<ElementRef> {
        self.by_qualified.get(qualified).copied()
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_ids.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> &str {
        &self.factory.entities[id].name
    }

    pub fn cfg(&self, container: ContainerRef) -> &CfgIndex<'a> {
        match container {
            ContainerRef::Screen(i) => &self.screens[i].cfg,
            ContainerRef::Action(i) => &self.actions[i].cfg,
        }
    }

    pub fn qualified(&self, container: ContainerRef) -> &str {
        match container {
            ContainerRef::Screen(i) => &self.screens[i].qualified,
            ContainerRef::Action(i) => &self.actions[i].qualified,
        }
    }

    /// Relevant roles for a run against `policy`.
    pub fn relevant_with(&self, policy: &CompiledPolicy) -> RoleSet {
        self.relevant_roles.union(&policy.roles)
    }

    /// Resolves a policy's names against this factory's universe and
    /// entities. Policies produced by [`crate::ingest::parse_policy`]
    /// always compile; hand-built ones may not.
    pub fn compile_policy(&self, policy: &Policy) -> Result<CompiledPolicy, IndexError> {
        let mut by_entity = vec![None; self.factory.entities.len()];
        let mut roles = self.universe.empty_set();
        for rule in policy.rules.values() {
            let path = format!("policy.rules.{}", rule.entity);
            let Some(entity) = self.entity_id(&rule.entity) else {
                return Err(dangling(path, format!("entity `{}` does not exist", rule.entity)));
            };
            let read = self
                .universe
                .set_of(rule.read.iter().map(String::as_str))
                .map_err(|e| dangling(format!("{path}.read"), e.to_string()))?;
            let write = self
                .universe
                .set_of(rule.write.iter().map(String::as_str))
                .map_err(|e| dangling(format!("{path}.write"), e.to_string()))?;
            roles.union_with(&read);
            roles.union_with(&write);
            by_entity[entity] = Some(EntityRoles { read, write });
        }
        Ok(CompiledPolicy { by_entity, roles })
    }
}

/// Per-entity policy role sets over the factory's role universe.
#[derive(Debug, Clone)]
pub struct CompiledPolicy {
    by_entity: Vec<Option<EntityRoles>>,
    /// Union of every role named anywhere in the policy.
    pub roles: RoleSet,
}

#[derive(Debug, Clone)]
pub struct EntityRoles {
    pub read: RoleSet,
    pub write: RoleSet,
}

impl CompiledPolicy {
    /// Policy roles for one entity and mode; `None` when the entity has no
    /// rule and is therefore out of scope.
    pub fn roles_for(&self, entity: usize, mode: AccessMode) -> Option<&RoleSet> {
        self.by_entity.get(entity)?.as_ref().map(|r| match mode {
            AccessMode::Read => &r.read,
            AccessMode::Write => &r.write,
        })
    }

    /// The full rule for one entity, if the policy has one.
    pub fn rule(&self, entity: usize) -> Option<&EntityRoles> {
        self.by_entity.get(entity)?.as_ref()
    }

    pub fn covers(&self, entity: usize) -> bool {
        self.by_entity.get(entity).is_some_and(Option::is_some)
    }
}

/// Builds the index. See the module docs for what gets resolved.
pub fn index_factory(factory: &Factory) -> Result<FactoryIndex<'_>, IndexError> {
    let universe = RoleUniverse::new(factory.roles.iter().cloned());
    let default_roles = universe
        .set_of(factory.default_roles.iter().map(String::as_str))
        .map_err(|e| dangling("default_roles", e.to_string()))?;

    let entity_ids: HashMap<&str, usize> = factory
        .entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.name.as_str(), i))
        .collect();

    // Container indices: all screens in module order, then all actions.
    let mut action_ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut next_action = 0usize;
    for (mi, module) in factory.modules.iter().enumerate() {
        for ai in 0..module.actions.len() {
            action_ids.insert((mi, ai), next_action);
            next_action += 1;
        }
    }

    let mut relevant = default_roles.clone();
    let mut screens = Vec::new();
    let mut actions = Vec::new();
    let mut by_qualified = HashMap::new();

    for (mi, module) in factory.modules.iter().enumerate() {
        for (si, screen) in module.screens.iter().enumerate() {
            let qualified = format!("{}.{}", module.name, screen.name);
            let allowed = universe
                .set_of(screen.allowed_roles.iter().map(String::as_str))
                .map_err(|e| dangling(format!("{qualified}.allowed_roles"), e.to_string()))?;
            relevant.union_with(&allowed);
            let cfg = index_cfg(
                factory,
                &screen.cfg,
                &qualified,
                &universe,
                &entity_ids,
                &action_ids,
                &mut relevant,
            )?;
            by_qualified.insert(qualified.clone(), ElementRef::Screen(screens.len()));
            screens.push(ScreenInfo {
                module: mi,
                screen: si,
                qualified,
                allowed,
                cfg,
            });
        }
    }
    for (mi, module) in factory.modules.iter().enumerate() {
        for (ai, action) in module.actions.iter().enumerate() {
            let qualified = format!("{}.{}", module.name, action.name);
            let cfg = index_cfg(
                factory,
                &action.cfg,
                &qualified,
                &universe,
                &entity_ids,
                &action_ids,
                &mut relevant,
            )?;
            by_qualified.insert(qualified.clone(), ElementRef::Action(actions.len()));
            actions.push(ActionInfo {
                module: mi,
                action: ai,
                qualified,
                cfg,
            });
        }
    }

    Ok(FactoryIndex {
        factory,
        universe,
        default_roles,
        relevant_roles: relevant,
        screens,
        actions,
        by_qualified,
        entity_ids,
    })
}

fn index_cfg<'a>(
    factory: &'a Factory,
    cfg: &'a Cfg,
    container: &str,
    universe: &RoleUniverse,
    entity_ids: &HashMap<&'a str, usize>,
    action_ids: &HashMap<(usize, usize), usize>,
    relevant: &mut RoleSet,
) -> Result<CfgIndex<'a>, IndexError> {
    let by_id: HashMap<&str, usize> = cfg
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();

    let mut nodes = Vec::with_capacity(cfg.nodes.len());
    let mut start = None;
    for (i, node) in cfg.nodes.iter().enumerate() {
        let path = || format!("{container}.cfg.nodes.{}", node.id);
        let ix = match &node.kind {
            NodeKind::Start => {
                start.get_or_insert(i);
                NodeIx::Start
            }
            NodeKind::End => NodeIx::End,
            NodeKind::Other => NodeIx::Other,
            NodeKind::Cond { condition } => {
                collect_condition_roles(condition, universe, relevant, &path())?;
                NodeIx::Cond { condition }
            }
            NodeKind::Call { target } => match resolve_call_target(factory, target) {
                CallResolution::Action { module, action } => NodeIx::Call {
                    action: action_ids[&(module, action)],
                },
                _ => {
                    return Err(dangling(
                        path(),
                        format!("call target `{target}` does not resolve to an action"),
                    ))
                }
            },
            NodeKind::Access { entity, mode } => match entity_ids.get(entity.as_str()) {
                Some(&entity) => NodeIx::Access {
                    entity,
                    mode: *mode,
                },
                None => {
                    return Err(dangling(path(), format!("entity `{entity}` does not exist")))
                }
            },
            NodeKind::Grant { role } | NodeKind::Revoke { role } => {
                let id = universe
                    .id(role)
                    .ok_or_else(|| dangling(path(), format!("role `{role}` is not declared")))?;
                relevant.insert(id);
                if matches!(node.kind, NodeKind::Grant { .. }) {
                    NodeIx::Grant { role: id }
                } else {
                    NodeIx::Revoke { role: id }
                }
            }
        };
        nodes.push(ix);
    }

    let start = start.ok_or_else(|| dangling(format!("{container}.cfg"), "no start node"))?;

    let mut succs: Vec<Vec<Succ>> = vec![Vec::new(); cfg.nodes.len()];
    for (i, edge) in cfg.edges.iter().enumerate() {
        let from = *by_id.get(edge.from.as_str()).ok_or_else(|| {
            dangling(
                format!("{container}.cfg.edges[{i}]"),
                format!("edge references unknown node `{}`", edge.from),
            )
        })?;
        let to = *by_id.get(edge.to.as_str()).ok_or_else(|| {
            dangling(
                format!("{container}.cfg.edges[{i}]"),
                format!("edge references unknown node `{}`", edge.to),
            )
        })?;
        succs[from].push(Succ {
            node: to,
            label: edge.label,
        });
    }
    // True branch first, then false, then unlabeled edges in input order:
    // traversal order becomes independent of edge order in the file.
    for list in &mut succs {
        list.sort_by_key(|s| match s.label {
            Some(BranchLabel::True) => 0,
            Some(BranchLabel::False) => 1,
            None => 2,
        });
    }

    Ok(CfgIndex {
        raw: cfg,
        start,
        nodes,
        succs,
    })
}

fn collect_condition_roles(
    cond: &Condition,
    universe: &RoleUniverse,
    relevant: &mut RoleSet,
    path: &str,
) -> Result<(), IndexError> {
    match cond {
        Condition::CheckRole { role } => {
            let id = universe
                .id(role)
                .ok_or_else(|| dangling(path, format!("checked role `{role}` is not declared")))?;
            relevant.insert(id);
            Ok(())
        }
        Condition::Opaque { .. } => Ok(()),
        Condition::Not { arg } => collect_condition_roles(arg, universe, relevant, path),
        Condition::And { args } | Condition::Or { args } => {
            for arg in args {
                collect_condition_roles(arg, universe, relevant, path)?;
            }
            Ok(())
        }
    }
}

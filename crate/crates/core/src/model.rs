//! Factory domain model: roles, entities, modules, screens, actions, and
//! their control-flow graphs, plus structural validation.
//!
//! The types here mirror the factory file format one to one (see
//! [`crate::ingest`] for the JSON mapping). Apart from [`AccessMode`], which
//! the report format reuses in both directions, they only derive
//! `Serialize`; parsing goes through a strict hand-rolled reader so that
//! unknown fields, duplicate set members, and type mismatches are rejected
//! with precise paths rather than silently coerced.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::Serialize;

/// File format version accepted and emitted by this crate.
pub const FORMAT_VERSION: u64 = 1;

/// A role is identified purely by its name.
pub type Role = String;

/// A data table owned by one module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Entity {
    pub name: String,
    pub module: String,
}

/// A whole application factory: the unit the analysis runs on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Factory {
    pub format_version: u64,
    pub name: String,
    pub roles: BTreeSet<Role>,
    pub default_roles: BTreeSet<Role>,
    pub entities: Vec<Entity>,
    pub modules: Vec<ModuleDef>,
}

/// One module: a named bundle of screens and actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModuleDef {
    pub name: String,
    pub screens: Vec<Entrypoint>,
    pub actions: Vec<ActionDef>,
}

/// A screen: the only place users enter a factory. Access is limited to
/// users holding at least one of `allowed_roles`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Entrypoint {
    pub name: String,
    pub allowed_roles: BTreeSet<Role>,
    pub cfg: Cfg,
}

/// A callable subroutine. Actions have no role gate of their own; they are
/// reached only through calls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActionDef {
    pub name: String,
    pub cfg: Cfg,
}

/// Control-flow graph of a screen or action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cfg {
    pub nodes: Vec<CfgNode>,
    pub edges: Vec<CfgEdge>,
}

/// One CFG node. Ids are unique within their graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CfgNode {
    pub id: String,
    #[serde(flatten)]
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Start,
    End,
    /// Branch on a condition; out-edges are labeled `true` and `false`.
    Cond { condition: Condition },
    /// Call an action by qualified name (`Module.Action`).
    Call { target: String },
    /// Read or write an entity.
    Access { entity: String, mode: AccessMode },
    /// The current user gains a role from here on.
    Grant { role: Role },
    /// The current user loses a role from here on.
    Revoke { role: Role },
    /// Anything the analysis does not interpret.
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessMode {
    Read,
    Write,
}

impl fmt::Display for AccessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessMode::Read => "read",
            AccessMode::Write => "write",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CfgEdge {
    pub from: String,
    pub to: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<BranchLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchLabel {
    True,
    False,
}

/// Boolean guard tree attached to a cond node.
///
/// `CheckRole` leaves are the only part the analysis interprets; `Opaque`
/// leaves stand for everything else (comparisons, function results) and are
/// never assumed true or false.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Condition {
    CheckRole { role: Role },
    Opaque { id: String },
    Not { arg: Box<Condition> },
    And { args: Vec<Condition> },
    Or { args: Vec<Condition> },
}

/// Collects the distinct atoms of a condition: the checked role names and
/// the opaque leaf ids.
pub fn condition_atoms(cond: &Condition) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut roles = BTreeSet::new();
    let mut opaque = BTreeSet::new();
    collect_atoms(cond, &mut roles, &mut opaque);
    (roles, opaque)
}

fn collect_atoms(cond: &Condition, roles: &mut BTreeSet<String>, opaque: &mut BTreeSet<String>) {
    match cond {
        Condition::CheckRole { role } => {
            roles.insert(role.clone());
        }
        Condition::Opaque { id } => {
            opaque.insert(id.clone());
        }
        Condition::Not { arg } => collect_atoms(arg, roles, opaque),
        Condition::And { args } | Condition::Or { args } => {
            for arg in args {
                collect_atoms(arg, roles, opaque);
            }
        }
    }
}

/// Severity of a validation result. Errors make a factory unusable;
/// warnings flag suspicious but analyzable constructs (dead actions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

/// One validation result, pointing at the offending element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
    pub severity: Severity,
}

impl Violation {
    fn error(location: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            location: location.into(),
            message: message.into(),
            severity: Severity::Error,
        }
    }

    fn warning(location: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            location: location.into(),
            message: message.into(),
            severity: Severity::Warning,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.location, self.message)
    }
}

/// `true` when `name` matches `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_valid_role_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Outcome of resolving a `Call` node's qualified target name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallResolution {
    /// Indices into `factory.modules` and that module's `actions`.
    Action { module: usize, action: usize },
    /// The name denotes a screen; screens are not callable.
    Screen,
    /// More than one `Module.Name` split matches.
    Ambiguous,
    NotFound,
}

/// Resolves a qualified `Module.Action` target. Module names may contain
/// dots, so every split is tried; exactly one must land on an action.
pub fn resolve_call_target(factory: &Factory, target: &str) -> CallResolution {
    let mut found: Option<CallResolution> = None;
    for (pos, _) in target.match_indices('.') {
        let (module_name, rest) = (&target[..pos], &target[pos + 1..]);
        for (mi, module) in factory
            .modules
            .iter()
            .enumerate()
            .filter(|(_, m)| m.name == module_name)
        {
            let hit = if let Some(ai) = module.actions.iter().position(|a| a.name == rest) {
                Some(CallResolution::Action {
                    module: mi,
                    action: ai,
                })
            } else if module.screens.iter().any(|s| s.name == rest) {
                Some(CallResolution::Screen)
            } else {
                None
            };
            match (found, hit) {
                (None, Some(h)) => found = Some(h),
                (Some(_), Some(_)) => return CallResolution::Ambiguous,
                _ => {}
            }
        }
    }
    found.unwrap_or(CallResolution::NotFound)
}

/// Checks every structural rule a factory must satisfy, returning all
/// violations rather than stopping at the first.
///
/// Errors cover: malformed or duplicate names, dangling role/entity/call
/// references, and CFG shape (exactly one start node, at least one end,
/// cond nodes with exactly one `true` and one `false` out-edge, every other
/// non-end node with exactly one unlabeled out-edge, end nodes with none,
/// labels only on cond edges). Actions never reachable from any screen
/// through calls are reported as warnings, not errors.
pub fn validate_factory(factory: &Factory) -> Vec<Violation> {
    let mut out = Vec::new();

    if factory.format_version != FORMAT_VERSION {
        out.push(Violation::error(
            "format_version",
            format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                factory.format_version
            ),
        ));
    }

    for role in &factory.roles {
        if !is_valid_role_name(role) {
            out.push(Violation::error(
                format!("roles.{role}"),
                "role name must match [A-Za-z_][A-Za-z0-9_]*",
            ));
        }
    }
    for role in &factory.default_roles {
        if !factory.roles.contains(role) {
            out.push(Violation::error(
                format!("default_roles.{role}"),
                "default role is not declared in roles",
            ));
        }
    }

    let mut entity_names = HashSet::new();
    for entity in &factory.entities {
        if !entity_names.insert(entity.name.as_str()) {
            out.push(Violation::error(
                format!("entities.{}", entity.name),
                "duplicate entity name",
            ));
        }
        if !factory.modules.iter().any(|m| m.name == entity.module) {
            out.push(Violation::error(
                format!("entities.{}", entity.name),
                format!("owning module `{}` does not exist", entity.module),
            ));
        }
    }

    let mut module_names = HashSet::new();
    for module in &factory.modules {
        if !module_names.insert(module.name.as_str()) {
            out.push(Violation::error(
                format!("modules.{}", module.name),
                "duplicate module name",
            ));
        }
        let mut member_names: HashMap<&str, &str> = HashMap::new();
        for screen in &module.screens {
            if let Some(prev) = member_names.insert(screen.name.as_str(), "screen") {
                out.push(Violation::error(
                    format!("modules.{}.screens.{}", module.name, screen.name),
                    format!("name collides with a {prev} in the same module"),
                ));
            }
        }
        for action in &module.actions {
            if let Some(prev) = member_names.insert(action.name.as_str(), "action") {
                out.push(Violation::error(
                    format!("modules.{}.actions.{}", module.name, action.name),
                    format!("name collides with a {prev} in the same module"),
                ));
            }
        }

        for screen in &module.screens {
            let path = format!("modules.{}.screens.{}", module.name, screen.name);
            if screen.allowed_roles.is_empty() {
                out.push(Violation::error(
                    format!("{path}.allowed_roles"),
                    "allowed_roles must not be empty",
                ));
            }
            for role in &screen.allowed_roles {
                if !factory.roles.contains(role) {
                    out.push(Violation::error(
                        format!("{path}.allowed_roles.{role}"),
                        "role is not declared in roles",
                    ));
                }
            }
            validate_cfg(factory, &screen.cfg, &path, &mut out);
        }
        for action in &module.actions {
            let path = format!("modules.{}.actions.{}", module.name, action.name);
            validate_cfg(factory, &action.cfg, &path, &mut out);
        }
    }

    flag_orphan_actions(factory, &mut out);
    out
}

fn validate_cfg(factory: &Factory, cfg: &Cfg, container: &str, out: &mut Vec<Violation>) {
    let cfg_path = format!("{container}.cfg");

    let mut ids = HashSet::new();
    for node in &cfg.nodes {
        if !ids.insert(node.id.as_str()) {
            out.push(Violation::error(
                format!("{cfg_path}.nodes.{}", node.id),
                "duplicate node id",
            ));
        }
    }

    let mut starts = 0usize;
    let mut ends = 0usize;
    for node in &cfg.nodes {
        match node.kind {
            NodeKind::Start => starts += 1,
            NodeKind::End => ends += 1,
            _ => {}
        }
    }
    if starts != 1 {
        out.push(Violation::error(
            cfg_path.clone(),
            format!("expected exactly one start node, found {starts}"),
        ));
    }
    if ends == 0 {
        out.push(Violation::error(cfg_path.clone(), "expected at least one end node"));
    }

    let mut outgoing: HashMap<&str, Vec<&CfgEdge>> = HashMap::new();
    for (i, edge) in cfg.edges.iter().enumerate() {
        for endpoint in [&edge.from, &edge.to] {
            if !ids.contains(endpoint.as_str()) {
                out.push(Violation::error(
                    format!("{cfg_path}.edges[{i}]"),
                    format!("edge references unknown node `{endpoint}`"),
                ));
            }
        }
        outgoing.entry(edge.from.as_str()).or_default().push(edge);
    }

    for node in &cfg.nodes {
        let node_path = format!("{cfg_path}.nodes.{}", node.id);
        let edges = outgoing.get(node.id.as_str()).map_or(&[][..], |v| &v[..]);
        match &node.kind {
            NodeKind::End => {
                if !edges.is_empty() {
                    out.push(Violation::error(
                        node_path.clone(),
                        format!("end node must have no out-edges, found {}", edges.len()),
                    ));
                }
            }
            NodeKind::Cond { condition } => {
                let truthy = edges
                    .iter()
                    .filter(|e| e.label == Some(BranchLabel::True))
                    .count();
                let falsy = edges
                    .iter()
                    .filter(|e| e.label == Some(BranchLabel::False))
                    .count();
                let unlabeled = edges.iter().filter(|e| e.label.is_none()).count();
                if truthy != 1 {
                    out.push(Violation::error(
                        node_path.clone(),
                        format!("cond node must have exactly one true out-edge, found {truthy}"),
                    ));
                }
                if falsy != 1 {
                    out.push(Violation::error(
                        node_path.clone(),
                        format!("cond node must have exactly one false out-edge, found {falsy}"),
                    ));
                }
                if unlabeled != 0 {
                    out.push(Violation::error(
                        node_path.clone(),
                        "cond node out-edges must be labeled true or false",
                    ));
                }
                validate_condition(factory, condition, &node_path, out);
            }
            other => {
                if edges.len() != 1 {
                    out.push(Violation::error(
                        node_path.clone(),
                        format!("node must have exactly one out-edge, found {}", edges.len()),
                    ));
                }
                if edges.iter().any(|e| e.label.is_some()) {
                    out.push(Violation::error(
                        node_path.clone(),
                        "labels are only allowed on cond out-edges",
                    ));
                }
                match other {
                    NodeKind::Grant { role } | NodeKind::Revoke { role } => {
                        if !factory.roles.contains(role) {
                            out.push(Violation::error(
                                node_path.clone(),
                                format!("role `{role}` is not declared in roles"),
                            ));
                        }
                    }
                    NodeKind::Access { entity, .. } => {
                        if !factory.entities.iter().any(|e| &e.name == entity) {
                            out.push(Violation::error(
                                node_path.clone(),
                                format!("entity `{entity}` does not exist"),
                            ));
                        }
                    }
                    NodeKind::Call { target } => {
                        match resolve_call_target(factory, target) {
                            CallResolution::Action { .. } => {}
                            CallResolution::Screen => out.push(Violation::error(
                                node_path.clone(),
                                format!("call target `{target}` is a screen; only actions are callable"),
                            )),
                            CallResolution::Ambiguous => out.push(Violation::error(
                                node_path.clone(),
                                format!("call target `{target}` is ambiguous"),
                            )),
                            CallResolution::NotFound => out.push(Violation::error(
                                node_path.clone(),
                                format!("call target `{target}` does not resolve to an action"),
                            )),
                        }
                    }
                    _ => {}
                }
            }
        }
    }
}

fn validate_condition(
    factory: &Factory,
    cond: &Condition,
    node_path: &str,
    out: &mut Vec<Violation>,
) {
    match cond {
        Condition::CheckRole { role } => {
            if !factory.roles.contains(role) {
                out.push(Violation::error(
                    format!("{node_path}.condition"),
                    format!("checked role `{role}` is not declared in roles"),
                ));
            }
        }
        Condition::Opaque { .. } => {}
        Condition::Not { arg } => validate_condition(factory, arg, node_path, out),
        Condition::And { args } | Condition::Or { args } => {
            if args.len() < 2 {
                let op = if matches!(cond, Condition::And { .. }) {
                    "and"
                } else {
                    "or"
                };
                out.push(Violation::error(
                    format!("{node_path}.condition"),
                    format!("`{op}` requires at least two operands, found {}", args.len()),
                ));
            }
            for arg in args {
                validate_condition(factory, arg, node_path, out);
            }
        }
    }
}

/// Flags actions that no screen reaches through any chain of calls. They
/// stay in the factory and the call graph but are dead weight worth
/// surfacing.
fn flag_orphan_actions(factory: &Factory, out: &mut Vec<Violation>) {
    let mut reached: HashSet<(usize, usize)> = HashSet::new();
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();

    let visit_calls = |cfg: &Cfg, reached: &mut HashSet<(usize, usize)>, queue: &mut VecDeque<(usize, usize)>| {
        for node in &cfg.nodes {
            if let NodeKind::Call { target } = &node.kind {
                if let CallResolution::Action { module, action } =
                    resolve_call_target(factory, target)
                {
                    if reached.insert((module, action)) {
                        queue.push_back((module, action));
                    }
                }
            }
        }
    };

    for module in &factory.modules {
        for screen in &module.screens {
            visit_calls(&screen.cfg, &mut reached, &mut queue);
        }
    }
    while let Some((mi, ai)) = queue.pop_front() {
        let cfg = &factory.modules[mi].actions[ai].cfg;
        visit_calls(cfg, &mut reached, &mut queue);
    }

    for (mi, module) in factory.modules.iter().enumerate() {
        for (ai, action) in module.actions.iter().enumerate() {
            if !reached.contains(&(mi, ai)) {
                out.push(Violation::warning(
                    format!("modules.{}.actions.{}", module.name, action.name),
                    "action is never called from any screen (dead code)",
                ));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_cfg(middle: Vec<CfgNode>) -> Cfg {
        let mut nodes = vec![CfgNode {
            id: "start".into(),
            kind: NodeKind::Start,
        }];
        nodes.extend(middle);
        nodes.push(CfgNode {
            id: "end".into(),
            kind: NodeKind::End,
        });
        let edges = nodes
            .windows(2)
            .map(|w| CfgEdge {
                from: w[0].id.clone(),
                to: w[1].id.clone(),
                label: None,
            })
            .collect();
        Cfg { nodes, edges }
    }

    fn small_factory() -> Factory {
        Factory {
            format_version: FORMAT_VERSION,
            name: "demo".into(),
            roles: ["Admin", "Registered"].iter().map(|s| s.to_string()).collect(),
            default_roles: ["Registered"].iter().map(|s| s.to_string()).collect(),
            entities: vec![Entity {
                name: "Client".into(),
                module: "Data".into(),
            }],
            modules: vec![
                ModuleDef {
                    name: "UI".into(),
                    screens: vec![Entrypoint {
                        name: "Home".into(),
                        allowed_roles: ["Registered"].iter().map(|s| s.to_string()).collect(),
                        cfg: linear_cfg(vec![CfgNode {
                            id: "c1".into(),
                            kind: NodeKind::Call {
                                target: "Data.GetClients".into(),
                            },
                        }]),
                    }],
                    actions: vec![],
                },
                ModuleDef {
                    name: "Data".into(),
                    screens: vec![],
                    actions: vec![ActionDef {
                        name: "GetClients".into(),
                        cfg: linear_cfg(vec![CfgNode {
                            id: "a1".into(),
                            kind: NodeKind::Access {
                                entity: "Client".into(),
                                mode: AccessMode::Read,
                            },
                        }]),
                    }],
                },
            ],
        }
    }

    fn errors(factory: &Factory) -> Vec<Violation> {
        validate_factory(factory)
            .into_iter()
            .filter(|v| v.severity == Severity::Error)
            .collect()
    }

    #[test]
    fn valid_factory_has_no_errors() {
        assert_eq!(errors(&small_factory()), Vec::new());
    }

    #[test]
    fn uncalled_action_gets_a_warning_not_an_error() {
        let mut factory = small_factory();
        factory.modules[1].actions.push(ActionDef {
            name: "Unused".into(),
            cfg: linear_cfg(vec![]),
        });
        let violations = validate_factory(&factory);
        assert_eq!(errors(&factory), Vec::new());
        let warning = violations
            .iter()
            .find(|v| v.severity == Severity::Warning)
            .expect("expected a dead-code warning");
        assert_eq!(warning.location, "modules.Data.actions.Unused");
    }

    #[test]
    fn action_called_only_by_dead_action_is_still_dead() {
        let mut factory = small_factory();
        factory.modules[1].actions.push(ActionDef {
            name: "DeadCaller".into(),
            cfg: linear_cfg(vec![CfgNode {
                id: "c".into(),
                kind: NodeKind::Call {
                    target: "Data.DeadCallee".into(),
                },
            }]),
        });
        factory.modules[1].actions.push(ActionDef {
            name: "DeadCallee".into(),
            cfg: linear_cfg(vec![]),
        });
        let warnings: Vec<String> = validate_factory(&factory)
            .into_iter()
            .filter(|v| v.severity == Severity::Warning)
            .map(|v| v.location)
            .collect();
        assert_eq!(
            warnings,
            vec![
                "modules.Data.actions.DeadCaller".to_string(),
                "modules.Data.actions.DeadCallee".to_string(),
            ]
        );
    }

    #[test]
    fn cond_with_two_true_edges_is_one_violation_naming_the_node() {
        let mut factory = small_factory();
        let cfg = Cfg {
            nodes: vec![
                CfgNode {
                    id: "s".into(),
                    kind: NodeKind::Start,
                },
                CfgNode {
                    id: "c".into(),
                    kind: NodeKind::Cond {
                        condition: Condition::CheckRole {
                            role: "Admin".into(),
                        },
                    },
                },
                CfgNode {
                    id: "e1".into(),
                    kind: NodeKind::End,
                },
                CfgNode {
                    id: "e2".into(),
                    kind: NodeKind::End,
                },
            ],
            edges: vec![
                CfgEdge {
                    from: "s".into(),
                    to: "c".into(),
                    label: None,
                },
                CfgEdge {
                    from: "c".into(),
                    to: "e1".into(),
                    label: Some(BranchLabel::True),
                },
                CfgEdge {
                    from: "c".into(),
                    to: "e2".into(),
                    label: Some(BranchLabel::True),
                },
            ],
        };
        factory.modules[0].screens[0].cfg = cfg;
        let errs = errors(&factory);
        let about_true: Vec<_> = errs
            .iter()
            .filter(|v| v.message.contains("true out-edge"))
            .collect();
        assert_eq!(about_true.len(), 1);
        assert_eq!(about_true[0].location, "modules.UI.screens.Home.cfg.nodes.c");
        assert!(errs.iter().any(|v| v.message.contains("false out-edge")));
    }

    #[test]
    fn structural_violations_are_all_reported() {
        let mut factory = small_factory();
        factory.roles.insert("9bad".into());
        factory.default_roles.insert("Ghost".into());
        factory.entities.push(Entity {
            name: "Client".into(),
            module: "Nowhere".into(),
        });
        factory.modules[0].screens[0].allowed_roles.clear();
        let errs = errors(&factory);
        let mut messages: Vec<&str> = errs.iter().map(|v| v.message.as_str()).collect();
        messages.sort();
        assert!(messages.contains(&"role name must match [A-Za-z_][A-Za-z0-9_]*"));
        assert!(messages.contains(&"default role is not declared in roles"));
        assert!(messages.contains(&"duplicate entity name"));
        assert!(messages.contains(&"owning module `Nowhere` does not exist"));
        assert!(messages.contains(&"allowed_roles must not be empty"));
        // "Ghost" also fails the unknown-default check only; it is a valid name.
        assert!(!messages.contains(&"duplicate module name"));
    }

    #[test]
    fn end_nodes_must_not_have_out_edges() {
        let mut factory = small_factory();
        factory.modules[1].actions[0].cfg.edges.push(CfgEdge {
            from: "end".into(),
            to: "start".into(),
            label: None,
        });
        let errs = errors(&factory);
        assert!(errs
            .iter()
            .any(|v| v.message.contains("end node must have no out-edges")));
    }

    #[test]
    fn labels_only_on_cond_edges() {
        let mut factory = small_factory();
        factory.modules[1].actions[0].cfg.edges[0].label = Some(BranchLabel::True);
        let errs = errors(&factory);
        assert!(errs
            .iter()
            .any(|v| v.message.contains("labels are only allowed on cond out-edges")));
    }

    #[test]
    fn call_target_must_resolve_to_an_action() {
        let mut factory = small_factory();
        factory.modules[0].screens[0].cfg.nodes[1].kind = NodeKind::Call {
            target: "UI.Home".into(),
        };
        assert!(errors(&factory)
            .iter()
            .any(|v| v.message.contains("is a screen")));

        factory.modules[0].screens[0].cfg.nodes[1].kind = NodeKind::Call {
            target: "Data.Missing".into(),
        };
        assert!(errors(&factory)
            .iter()
            .any(|v| v.message.contains("does not resolve to an action")));
    }

    #[test]
    fn dotted_module_names_resolve_unambiguously() {
        let mut factory = small_factory();
        factory.modules.push(ModuleDef {
            name: "Data.GetClients".into(),
            screens: vec![],
            actions: vec![ActionDef {
                name: "Inner".into(),
                cfg: linear_cfg(vec![]),
            }],
        });
        assert_eq!(
            resolve_call_target(&factory, "Data.GetClients.Inner"),
            CallResolution::Action { module: 2, action: 0 }
        );
        assert_eq!(
            resolve_call_target(&factory, "Data.GetClients"),
            CallResolution::Action { module: 1, action: 0 }
        );
    }

    #[test]
    fn ambiguous_call_target_is_flagged() {
        let mut factory = small_factory();
        factory.modules.push(ModuleDef {
            name: "Data.GetClients".into(),
            screens: vec![],
            actions: vec![ActionDef {
                name: "X".into(),
                cfg: linear_cfg(vec![]),
            }],
        });
        factory.modules.push(ModuleDef {
            name: "Data".into(),
            screens: vec![],
            actions: vec![ActionDef {
                name: "GetClients.X".into(),
                cfg: linear_cfg(vec![]),
            }],
        });
        // Second "Data" module is itself a duplicate-name error, but the
        // ambiguity must be reported independently of it.
        assert_eq!(
            resolve_call_target(&factory, "Data.GetClients.X"),
            CallResolution::Ambiguous
        );
    }

    #[test]
    fn condition_atoms_collects_roles_and_opaques() {
        let cond = Condition::And {
            args: vec![
                Condition::CheckRole {
                    role: "Admin".into(),
                },
                Condition::Or {
                    args: vec![
                        Condition::Not {
                            arg: Box::new(Condition::CheckRole {
                                role: "Lawyer".into(),
                            }),
                        },
                        Condition::Opaque { id: "q1".into() },
                        Condition::CheckRole {
                            role: "Admin".into(),
                        },
                    ],
                },
            ],
        };
        let (roles, opaque) = condition_atoms(&cond);
        assert_eq!(
            roles.into_iter().collect::<Vec<_>>(),
            vec!["Admin".to_string(), "Lawyer".to_string()]
        );
        assert_eq!(opaque.into_iter().collect::<Vec<_>>(), vec!["q1".to_string()]);
    }

    #[test]
    fn role_name_shape() {
        assert!(is_valid_role_name("Admin"));
        assert!(is_valid_role_name("_x9"));
        assert!(!is_valid_role_name(""));
        assert!(!is_valid_role_name("9lives"));
        assert!(!is_valid_role_name("has space"));
        assert!(!is_valid_role_name("héros"));
    }

    #[test]
    fn screen_action_name_collision_is_an_error() {
        let mut factory = small_factory();
        factory.modules[0].actions.push(ActionDef {
            name: "Home".into(),
            cfg: linear_cfg(vec![]),
        });
        assert!(errors(&factory)
            .iter()
            .any(|v| v.message.contains("collides with a screen")));
    }
}

//! Reading and writing factory and policy files.
//!
//! Parsing is deliberately strict: unknown fields, wrong types, duplicate
//! members of set-valued arrays, and unsupported `format_version`s are all
//! rejected. Syntax errors carry line/column positions; schema errors carry
//! the path of the offending element; semantic errors (names that do not
//! exist in the factory) are distinguished from both. The reader walks a
//! parsed [`serde_json::Value`] by hand instead of deriving `Deserialize`
//! so that strictness and error paths stay under our control.
//!
//! Serialization is canonical: fixed key order, set-valued arrays sorted,
//! two-space indentation, trailing newline. Parsing then serializing a
//! valid file is the identity on content, and serializing the same factory
//! twice yields identical bytes.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{
    AccessMode, ActionDef, BranchLabel, Cfg, CfgEdge, CfgNode, Condition, Entity, Entrypoint,
    Factory, ModuleDef, NodeKind, FORMAT_VERSION,
};

/// Why an input file was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    /// The text is not JSON at all.
    #[error("syntax error at line {line} column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    /// The JSON does not match the file schema.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    /// The file is well-formed but references things that do not exist.
    #[error("semantic error at {path}: {message}")]
    Semantic { path: String, message: String },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn semantic(path: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Semantic {
        path: path.into(),
        message: message.into(),
    }
}

/// Per-entity read/write role lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolicyRule {
    pub entity: String,
    pub read: BTreeSet<String>,
    pub write: BTreeSet<String>,
}

impl PolicyRule {
    pub fn roles_for(&self, mode: AccessMode) -> &BTreeSet<String> {
        match mode {
            AccessMode::Read => &self.read,
            AccessMode::Write => &self.write,
        }
    }
}

/// An access policy: at most one rule per entity. Entities without a rule
/// are outside the policy's scope and never produce findings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Policy {
    pub rules: BTreeMap<String, PolicyRule>,
}

impl Policy {
    pub fn rule(&self, entity: &str) -> Option<&PolicyRule> {
        self.rules.get(entity)
    }
}

/// Parses a factory file. Schema strictness only; run
/// [`crate::model::validate_factory`] afterwards for structural rules.
pub fn parse_factory(text: &str) -> Result<Factory, ParseError> {
    let value = parse_json(text)?;
    let map = expect_object(&value, "$")?;
    check_keys(
        map,
        "$",
        &["format_version", "name", "roles", "default_roles", "entities", "modules"],
    )?;

    let format_version = expect_version(map, "$")?;
    let name = expect_string(required(map, "name", "$")?, "$.name")?;
    let roles = string_set(required(map, "roles", "$")?, "$.roles")?;
    let default_roles = string_set(required(map, "default_roles", "$")?, "$.default_roles")?;

    let mut entities = Vec::new();
    for (i, item) in expect_array(required(map, "entities", "$")?, "$.entities")?
        .iter()
        .enumerate()
    {
        let path = format!("$.entities[{i}]");
        let obj = expect_object(item, &path)?;
        check_keys(obj, &path, &["name", "module"])?;
        entities.push(Entity {
            name: expect_string(required(obj, "name", &path)?, &format!("{path}.name"))?,
            module: expect_string(required(obj, "module", &path)?, &format!("{path}.module"))?,
        });
    }

    let mut modules = Vec::new();
    for (i, item) in expect_array(required(map, "modules", "$")?, "$.modules")?
        .iter()
        .enumerate()
    {
        let path = format!("$.modules[{i}]");
        modules.push(parse_module(item, &path)?);
    }

    Ok(Factory {
        format_version,
        name,
        roles,
        default_roles,
        entities,
        modules,
    })
}

fn parse_module(value: &Value, path: &str) -> Result<ModuleDef, ParseError> {
    let map = expect_object(value, path)?;
    check_keys(map, path, &["name", "screens", "actions"])?;
    let name = expect_string(required(map, "name", path)?, &format!("{path}.name"))?;

    let mut screens = Vec::new();
    for (i, item) in expect_array(required(map, "screens", path)?, &format!("{path}.screens"))?
        .iter()
        .enumerate()
    {
        let spath = format!("{path}.screens[{i}]");
        let obj = expect_object(item, &spath)?;
        check_keys(obj, &spath, &["name", "allowed_roles", "cfg"])?;
        screens.push(Entrypoint {
            name: expect_string(required(obj, "name", &spath)?, &format!("{spath}.name"))?,
            allowed_roles: string_set(
                required(obj, "allowed_roles", &spath)?,
                &format!("{spath}.allowed_roles"),
            )?,
            cfg: parse_cfg(required(obj, "cfg", &spath)?, &format!("{spath}.cfg"))?,
        });
    }

    let mut actions = Vec::new();
    for (i, item) in expect_array(required(map, "actions", path)?, &format!("{path}.actions"))?
        .iter()
        .enumerate()
    {
        let apath = format!("{path}.actions[{i}]");
        let obj = expect_object(item, &apath)?;
        check_keys(obj, &apath, &["name", "cfg"])?;
        actions.push(ActionDef {
            name: expect_string(required(obj, "name", &apath)?, &format!("{apath}.name"))?,
            cfg: parse_cfg(required(obj, "cfg", &apath)?, &format!("{apath}.cfg"))?,
        });
    }

    Ok(ModuleDef {
        name,
        screens,
        actions,
    })
}

fn parse_cfg(value: &Value, path: &str) -> Result<Cfg, ParseError> {
    let map = expect_object(value, path)?;
    check_keys(map, path, &["nodes", "edges"])?;

    let mut nodes = Vec::new();
    for (i, item) in expect_array(required(map, "nodes", path)?, &format!("{path}.nodes"))?
        .iter()
        .enumerate()
    {
        nodes.push(parse_node(item, &format!("{path}.nodes[{i}]"))?);
    }

    let mut edges = Vec::new();
    for (i, item) in expect_array(required(map, "edges", path)?, &format!("{path}.edges"))?
        .iter()
        .enumerate()
    {
        let epath = format!("{path}.edges[{i}]");
        let obj = expect_object(item, &epath)?;
        check_keys(obj, &epath, &["from", "to", "label"])?;
        let label = match obj.get("label") {
            None => None,
            Some(v) => {
                let lpath = format!("{epath}.label");
                match expect_string(v, &lpath)?.as_str() {
                    "true" => Some(BranchLabel::True),
                    "false" => Some(BranchLabel::False),
                    other => {
                        return Err(schema(lpath, format!("must be \"true\" or \"false\", got \"{other}\"")))
                    }
                }
            }
        };
        edges.push(CfgEdge {
            from: expect_string(required(obj, "from", &epath)?, &format!("{epath}.from"))?,
            to: expect_string(required(obj, "to", &epath)?, &format!("{epath}.to"))?,
            label,
        });
    }

    Ok(Cfg { nodes, edges })
}

fn parse_node(value: &Value, path: &str) -> Result<CfgNode, ParseError> {
    let map = expect_object(value, path)?;
    let kind = expect_string(required(map, "kind", path)?, &format!("{path}.kind"))?;
    let id = expect_string(required(map, "id", path)?, &format!("{path}.id"))?;
    let kind = match kind.as_str() {
        "start" => {
            check_keys(map, path, &["id", "kind"])?;
            NodeKind::Start
        }
        "end" => {
            check_keys(map, path, &["id", "kind"])?;
            NodeKind::End
        }
        "other" => {
            check_keys(map, path, &["id", "kind"])?;
            NodeKind::Other
        }
        "cond" => {
            check_keys(map, path, &["id", "kind", "condition"])?;
            NodeKind::Cond {
                condition: parse_condition(
                    required(map, "condition", path)?,
                    &format!("{path}.condition"),
                )?,
            }
        }
        "call" => {
            check_keys(map, path, &["id", "kind", "target"])?;
            NodeKind::Call {
                target: expect_string(required(map, "target", path)?, &format!("{path}.target"))?,
            }
        }
        "access" => {
            check_keys(map, path, &["id", "kind", "entity", "mode"])?;
            let mode_path = format!("{path}.mode");
            let mode = match expect_string(required(map, "mode", path)?, &mode_path)?.as_str() {
                "read" => AccessMode::Read,
                "write" => AccessMode::Write,
                other => {
                    return Err(schema(mode_path, format!("must be \"read\" or \"write\", got \"{other}\"")))
                }
            };
            NodeKind::Access {
                entity: expect_string(required(map, "entity", path)?, &format!("{path}.entity"))?,
                mode,
            }
        }
        "grant" | "revoke" => {
            check_keys(map, path, &["id", "kind", "role"])?;
            let role = expect_string(required(map, "role", path)?, &format!("{path}.role"))?;
            if kind == "grant" {
                NodeKind::Grant { role }
            } else {
                NodeKind::Revoke { role }
            }
        }
        other => {
            return Err(schema(
                format!("{path}.kind"),
                format!("unknown node kind \"{other}\""),
            ))
        }
    };
    Ok(CfgNode { id, kind })
}

fn parse_condition(value: &Value, path: &str) -> Result<Condition, ParseError> {
    let map = expect_object(value, path)?;
    let op = expect_string(required(map, "op", path)?, &format!("{path}.op"))?;
    match op.as_str() {
        "check_role" => {
            check_keys(map, path, &["op", "role"])?;
            Ok(Condition::CheckRole {
                role: expect_string(required(map, "role", path)?, &format!("{path}.role"))?,
            })
        }
        "opaque" => {
            check_keys(map, path, &["op", "id"])?;
            Ok(Condition::Opaque {
                id: expect_string(required(map, "id", path)?, &format!("{path}.id"))?,
            })
        }
        "not" => {
            check_keys(map, path, &["op", "arg"])?;
            Ok(Condition::Not {
                arg: Box::new(parse_condition(
                    required(map, "arg", path)?,
                    &format!("{path}.arg"),
                )?),
            })
        }
        "and" | "or" => {
            check_keys(map, path, &["op", "args"])?;
            let items = expect_array(required(map, "args", path)?, &format!("{path}.args"))?;
            if items.len() < 2 {
                return Err(schema(
                    format!("{path}.args"),
                    format!("`{op}` requires at least two operands, found {}", items.len()),
                ));
            }
            let mut args = Vec::new();
            for (i, item) in items.iter().enumerate() {
                args.push(parse_condition(item, &format!("{path}.args[{i}]"))?);
            }
            Ok(if op == "and" {
                Condition::And { args }
            } else {
                Condition::Or { args }
            })
        }
        other => Err(schema(
            format!("{path}.op"),
            format!("unknown condition op \"{other}\""),
        )),
    }
}

/// Parses a policy file and checks it against a factory: every entity and
/// role must exist, each entity gets at most one rule, and both role lists
/// of a rule must be non-empty.
pub fn parse_policy(text: &str, factory: &Factory) -> Result<Policy, ParseError> {
    let value = parse_json(text)?;
    let map = expect_object(&value, "$")?;
    check_keys(map, "$", &["format_version", "rules"])?;
    expect_version(map, "$")?;

    let mut rules = BTreeMap::new();
    for (i, item) in expect_array(required(map, "rules", "$")?, "$.rules")?
        .iter()
        .enumerate()
    {
        let path = format!("$.rules[{i}]");
        let obj = expect_object(item, &path)?;
        check_keys(obj, &path, &["entity", "read", "write"])?;
        let entity = expect_string(required(obj, "entity", &path)?, &format!("{path}.entity"))?;
        let read = string_set(required(obj, "read", &path)?, &format!("{path}.read"))?;
        let write = string_set(required(obj, "write", &path)?, &format!("{path}.write"))?;

        if !factory.entities.iter().any(|e| e.name == entity) {
            return Err(semantic(
                format!("{path}.entity"),
                format!("entity `{entity}` does not exist in factory `{}`", factory.name),
            ));
        }
        for (set, key) in [(&read, "read"), (&write, "write")] {
            if set.is_empty() {
                return Err(semantic(
                    format!("{path}.{key}"),
                    "rule role list must not be empty",
                ));
            }
            for role in set.iter() {
                if !factory.roles.contains(role) {
                    return Err(semantic(
                        format!("{path}.{key}"),
                        format!("role `{role}` is not declared in the factory"),
                    ));
                }
            }
        }
        if rules
            .insert(
                entity.clone(),
                PolicyRule {
                    entity: entity.clone(),
                    read,
                    write,
                },
            )
            .is_some()
        {
            return Err(semantic(
                format!("{path}.entity"),
                format!("duplicate rule for entity `{entity}`"),
            ));
        }
    }

    Ok(Policy { rules })
}

/// Canonical JSON text for a factory: fixed key order, sorted sets,
/// two-space indentation, trailing newline.
pub fn serialize_factory(factory: &Factory) -> String {
    let mut text = serde_json::to_string_pretty(factory).expect("factory serialization is infallible");
    text.push('\n');
    text
}

/// Canonical JSON text for a policy, rules sorted by entity.
pub fn serialize_policy(policy: &Policy) -> String {
    #[derive(Serialize)]
    struct PolicyFile<'a> {
        format_version: u64,
        rules: Vec<&'a PolicyRule>,
    }
    let file = PolicyFile {
        format_version: FORMAT_VERSION,
        rules: policy.rules.values().collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("policy serialization is infallible");
    text.push('\n');
    text
}

fn parse_json(text: &str) -> Result<Value, ParseError> {
    serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn expect_version(map: &Map<String, Value>, path: &str) -> Result<u64, ParseError> {
    let vpath = format!("{path}.format_version");
    let value = required(map, "format_version", path)?;
    let version = value
        .as_u64()
        .ok_or_else(|| schema(&vpath, "must be an integer"))?;
    if version != FORMAT_VERSION {
        return Err(schema(
            vpath,
            format!("unsupported format_version {version} (expected {FORMAT_VERSION})"),
        ));
    }
    Ok(version)
}

fn expect_object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ParseError> {
    value
        .as_object()
        .ok_or_else(|| schema(path, "must be an object"))
}

fn expect_array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>, ParseError> {
    value
        .as_array()
        .ok_or_else(|| schema(path, "must be an array"))
}

fn expect_string(value: &Value, path: &str) -> Result<String, ParseError> {
    value
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| schema(path, "must be a string"))
}

fn required<'a>(
    map: &'a Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<&'a Value, ParseError> {
    map.get(key)
        .ok_or_else(|| schema(path, format!("missing required field `{key}`")))
}

fn check_keys(map: &Map<String, Value>, path: &str, allowed: &[&str]) -> Result<(), ParseError> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(schema(path, format!("unknown field `{key}`")));
        }
    }
    Ok(())
}

/// Reads an array of strings that denotes a set: duplicates are rejected.
fn string_set(value: &Value, path: &str) -> Result<BTreeSet<String>, ParseError> {
    let items = expect_array(value, path)?;
    let mut out = BTreeSet::new();
    for (i, item) in items.iter().enumerate() {
        let s = expect_string(item, &format!("{path}[{i}]"))?;
        if !out.insert(s.clone()) {
            return Err(schema(
                format!("{path}[{i}]"),
                format!("duplicate entry `{s}` in set"),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_factory;

    const MINIMAL: &str = r#"{
        "format_version": 1,
        "name": "demo",
        "roles": ["Admin", "Registered"],
        "default_roles": ["Registered"],
        "entities": [{"name": "Client", "module": "Data"}],
        "modules": [
            {
                "name": "UI",
                "screens": [
                    {
                        "name": "Home",
                        "allowed_roles": ["Registered"],
                        "cfg": {
                            "nodes": [
                                {"id": "n0", "kind": "start"},
                                {"id": "n1", "kind": "call", "target": "Data.GetClients"},
                                {"id": "n2", "kind": "end"}
                            ],
                            "edges": [
                                {"from": "n0", "to": "n1"},
                                {"from": "n1", "to": "n2"}
                            ]
                        }
                    }
                ],
                "actions": []
            },
            {
                "name": "Data",
                "screens": [],
                "actions": [
                    {
                        "name": "GetClients",
                        "cfg": {
                            "nodes": [
                                {"id": "n0", "kind": "start"},
                                {"id": "n1", "kind": "cond", "condition": {
                                    "op": "and",
                                    "args": [
                                        {"op": "check_role", "role": "Admin"},
                                        {"op": "not", "arg": {"op": "opaque", "id": "limit"}}
                                    ]
                                }},
                                {"id": "n2", "kind": "access", "entity": "Client", "mode": "read"},
                                {"id": "n3", "kind": "end"}
                            ],
                            "edges": [
                                {"from": "n0", "to": "n1"},
                                {"from": "n1", "to": "n2", "label": "true"},
                                {"from": "n1", "to": "n3", "label": "false"},
                                {"from": "n2", "to": "n3"}
                            ]
                        }
                    }
                ]
            }
        ]
    }"#;

    #[test]
    fn parses_a_valid_factory() {
        let factory = parse_factory(MINIMAL).unwrap();
        assert_eq!(factory.name, "demo");
        assert_eq!(factory.modules.len(), 2);
        assert_eq!(factory.modules[1].actions[0].cfg.nodes.len(), 4);
        assert!(validate_factory(&factory)
            .iter()
            .all(|v| v.severity != crate::model::Severity::Error));
    }

    #[test]
    fn round_trip_is_identity() {
        let factory = parse_factory(MINIMAL).unwrap();
        let text = serialize_factory(&factory);
        let again = parse_factory(&text).unwrap();
        assert_eq!(factory, again);
        assert_eq!(text, serialize_factory(&again));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_factory("{\n  \"format_version\": 1,\n  oops\n}").unwrap_err();
        match err {
            ParseError::Syntax { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_schema_errors() {
        let text = MINIMAL.replacen("\"name\": \"demo\",", "\"name\": \"demo\", \"extra\": 1,", 1);
        let err = parse_factory(&text).unwrap_err();
        match err {
            ParseError::Schema { path, message } => {
                assert_eq!(path, "$");
                assert!(message.contains("unknown field `extra`"), "{message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn bad_access_mode_is_a_schema_error_with_path() {
        let text = MINIMAL.replacen("\"mode\": \"read\"", "\"mode\": \"admin\"", 1);
        let err = parse_factory(&text).unwrap_err();
        match err {
            ParseError::Schema { path, message } => {
                assert_eq!(path, "$.modules[1].actions[0].cfg.nodes[2].mode");
                assert!(message.contains("\"read\" or \"write\""));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_set_entries_are_schema_errors() {
        let text = MINIMAL.replacen(
            "\"roles\": [\"Admin\", \"Registered\"]",
            "\"roles\": [\"Admin\", \"Admin\"]",
            1,
        );
        let err = parse_factory(&text).unwrap_err();
        match err {
            ParseError::Schema { path, message } => {
                assert_eq!(path, "$.roles[1]");
                assert!(message.contains("duplicate entry `Admin`"));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_format_version_is_rejected() {
        let text = MINIMAL.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        let err = parse_factory(&text).unwrap_err();
        match err {
            ParseError::Schema { message, .. } => {
                assert!(message.contains("unsupported format_version 2"));
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn single_operand_conjunction_is_rejected() {
        let text = MINIMAL.replacen(
            r#"{"op": "check_role", "role": "Admin"},
                                        {"op": "not", "arg": {"op": "opaque", "id": "limit"}}"#,
            r#"{"op": "check_role", "role": "Admin"}"#,
            1,
        );
        let err = parse_factory(&text).unwrap_err();
        match err {
            ParseError::Schema { message, .. } => {
                assert!(message.contains("at least two operands"), "{message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    fn demo_factory() -> Factory {
        parse_factory(MINIMAL).unwrap()
    }

    #[test]
    fn parses_the_client_policy() {
        let policy = parse_policy(
            r#"{
                "format_version": 1,
                "rules": [
                    {"entity": "Client", "read": ["Admin"], "write": ["Admin"]}
                ]
            }"#,
            &demo_factory(),
        )
        .unwrap();
        assert_eq!(policy.rules.len(), 1);
        let rule = policy.rule("Client").unwrap();
        assert_eq!(rule.roles_for(AccessMode::Read).len(), 1);
    }

    #[test]
    fn policy_semantic_errors() {
        let factory = demo_factory();
        let unknown_entity = parse_policy(
            r#"{"format_version": 1, "rules": [{"entity": "Ghost", "read": ["Admin"], "write": ["Admin"]}]}"#,
            &factory,
        )
        .unwrap_err();
        assert!(matches!(unknown_entity, ParseError::Semantic { .. }));

        let unknown_role = parse_policy(
            r#"{"format_version": 1, "rules": [{"entity": "Client", "read": ["Ghost"], "write": ["Admin"]}]}"#,
            &factory,
        )
        .unwrap_err();
        assert!(matches!(unknown_role, ParseError::Semantic { .. }));

        let duplicate = parse_policy(
            r#"{"format_version": 1, "rules": [
                {"entity": "Client", "read": ["Admin"], "write": ["Admin"]},
                {"entity": "Client", "read": ["Admin"], "write": ["Admin"]}
            ]}"#,
            &factory,
        )
        .unwrap_err();
        match duplicate {
            ParseError::Semantic { message, .. } => {
                assert!(message.contains("duplicate rule for entity `Client`"))
            }
            other => panic!("expected semantic error, got {other:?}"),
        }

        let empty = parse_policy(
            r#"{"format_version": 1, "rules": [{"entity": "Client", "read": [], "write": ["Admin"]}]}"#,
            &factory,
        )
        .unwrap_err();
        match empty {
            ParseError::Semantic { message, .. } => {
                assert!(message.contains("must not be empty"))
            }
            other => panic!("expected semantic error, got {other:?}"),
        }
    }

    #[test]
    fn empty_policy_is_valid() {
        let policy = parse_policy(r#"{"format_version": 1, "rules": []}"#, &demo_factory()).unwrap();
        assert!(policy.rules.is_empty());
    }

    #[test]
    fn policy_round_trip() {
        let factory = demo_factory();
        let policy = parse_policy(
            r#"{"format_version": 1, "rules": [{"entity": "Client", "read": ["Registered", "Admin"], "write": ["Admin"]}]}"#,
            &factory,
        )
        .unwrap();
        let text = serialize_policy(&policy);
        assert_eq!(parse_policy(&text, &factory).unwrap(), policy);
    }
}

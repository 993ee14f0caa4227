//! Seeded synthetic factory generation.
//!
//! Two consumers drive the shape of this module: scale benchmarks need
//! factories with call graphs in the tens of thousands of nodes, and
//! correctness tests need small factories with known-by-construction
//! flaws. Both get the same contract: a [`GenParams`] value plus a seed
//! fully determines the output, byte for byte, on every platform (the
//! stream cipher behind the randomness is ChaCha8, which is specified
//! independently of the host).
//!
//! Planted flaws are not sampled and checked afterwards; each one is a
//! dedicated screen calling a dedicated action whose access is reachable
//! through a guard-free, grant-free path, with an allowed role kept out of
//! the generated policy. The emitted manifest is therefore ground truth:
//! every planted tuple must show up in the analyzer's findings.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{Policy, PolicyRule};
use crate::model::{
    AccessMode, ActionDef, BranchLabel, Cfg, CfgEdge, CfgNode, Condition, Entity, Entrypoint,
    Factory, ModuleDef, NodeKind, FORMAT_VERSION,
};

/// Knobs for one generation run. Counts may be zero; probabilities must
/// lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub seed: u64,
    pub modules: usize,
    pub screens_per_module: usize,
    pub actions_per_module: usize,
    /// Total entity count, spread over modules round-robin.
    pub entities: usize,
    /// Role count including the two default roles.
    pub roles: usize,
    /// Rough CFG size; actual node counts are drawn near this value.
    pub cfg_nodes_mean: usize,
    /// Chance that a generated access sits behind a role check.
    pub guard_probability: f64,
    /// Chance that a CFG segment is an entity access.
    pub access_probability: f64,
    /// Chance that a CFG segment grants or revokes a role.
    pub grant_probability: f64,
    /// Number of guaranteed flaws to plant on dedicated screens.
    pub plant_flaws: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            seed: 0,
            modules: 2,
            screens_per_module: 3,
            actions_per_module: 3,
            entities: 3,
            roles: 4,
            cfg_nodes_mean: 6,
            guard_probability: 0.5,
            access_probability: 0.3,
            grant_probability: 0.1,
            plant_flaws: 0,
        }
    }
}

/// One guaranteed-by-construction violation: `screen` (qualified) admits
/// `role`, and an unguarded path from it reaches an access of `entity`
/// with `mode` while the policy excludes `role`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedFlaw {
    pub screen: String,
    pub entity: String,
    pub mode: AccessMode,
    pub role: String,
}

/// Everything one generation run produces.
#[derive(Debug, Clone)]
pub struct Generated {
    pub factory: Factory,
    pub policy: Policy,
    pub planted: Vec<PlantedFlaw>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Modules are grouped into blocks of this size; call edges never leave
/// the block of the calling module.
const CROSS_BLOCK: usize = 8;

fn validate_params(p: &GenParams) -> Result<(), GenError> {
    for (name, value) in [
        ("guard_probability", p.guard_probability),
        ("access_probability", p.access_probability),
        ("grant_probability", p.grant_probability),
    ] {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(GenError::InvalidParams(format!(
                "{name} must be in [0, 1], got {value}"
            )));
        }
    }
    if p.access_probability + p.grant_probability > 1.0 {
        return Err(GenError::InvalidParams(
            "access_probability + grant_probability must not exceed 1".into(),
        ));
    }
    if p.entities > 0 && p.modules == 0 {
        return Err(GenError::InvalidParams(
            "entities need at least one module to live in".into(),
        ));
    }
    if p.modules > 0 && p.screens_per_module > 0 && p.roles == 0 {
        return Err(GenError::InvalidParams(
            "screens need at least one role for allowed_roles".into(),
        ));
    }
    if p.plant_flaws > 0 {
        if p.entities == 0 {
            return Err(GenError::InvalidParams(
                "plant_flaws > 0 needs at least one entity".into(),
            ));
        }
        if p.modules == 0 {
            return Err(GenError::InvalidParams(
                "plant_flaws > 0 needs at least one module".into(),
            ));
        }
        if p.roles < 4 {
            return Err(GenError::InvalidParams(
                "plant_flaws > 0 needs at least 4 roles (two defaults, one for the policy, one to leak)".into(),
            ));
        }
    }
    Ok(())
}

/// Grows one CFG left to right: a spine of single-successor nodes, with
/// branch diamonds hanging off it. Yields ids `n0..nK` with `n0` the
/// start.
struct CfgBuilder {
    nodes: Vec<CfgNode>,
    edges: Vec<CfgEdge>,
    cursor: String,
    next: usize,
    opaques: usize,
}

impl CfgBuilder {
    fn new() -> Self {
        CfgBuilder {
            nodes: vec![CfgNode {
                id: "n0".into(),
                kind: NodeKind::Start,
            }],
            edges: Vec::new(),
            cursor: "n0".into(),
            next: 1,
            opaques: 0,
        }
    }

    fn fresh(&mut self) -> String {
        let id = format!("n{}", self.next);
        self.next += 1;
        id
    }

    fn fresh_opaque(&mut self) -> String {
        let id = format!("c{}", self.opaques);
        self.opaques += 1;
        id
    }

    fn push(&mut self, kind: NodeKind) {
        let id = self.fresh();
        self.nodes.push(CfgNode {
            id: id.clone(),
            kind,
        });
        self.edges.push(CfgEdge {
            from: self.cursor.clone(),
            to: id.clone(),
            label: None,
        });
        self.cursor = id;
    }

    fn call(&mut self, target: &str) {
        self.push(NodeKind::Call {
            target: target.to_string(),
        });
    }

    /// A branch diamond: the condition, `inner` chained along the true
    /// edge, and both sides rejoining at a merge node.
    fn push_guarded(&mut self, condition: Condition, inner: Vec<NodeKind>) {
        let cond_id = self.fresh();
        self.nodes.push(CfgNode {
            id: cond_id.clone(),
            kind: NodeKind::Cond { condition },
        });
        self.edges.push(CfgEdge {
            from: self.cursor.clone(),
            to: cond_id.clone(),
            label: None,
        });

        let mut prev = cond_id.clone();
        let mut label = Some(BranchLabel::True);
        for kind in inner {
            let id = self.fresh();
            self.nodes.push(CfgNode {
                id: id.clone(),
                kind,
            });
            self.edges.push(CfgEdge {
                from: prev,
                to: id.clone(),
                label: label.take(),
            });
            prev = id;
        }

        let merge = self.fresh();
        self.nodes.push(CfgNode {
            id: merge.clone(),
            kind: NodeKind::Other,
        });
        self.edges.push(CfgEdge {
            from: prev,
            to: merge.clone(),
            label,
        });
        self.edges.push(CfgEdge {
            from: cond_id,
            to: merge.clone(),
            label: Some(BranchLabel::False),
        });
        self.cursor = merge;
    }

    fn finish(mut self) -> Cfg {
        let end = self.fresh();
        self.nodes.push(CfgNode {
            id: end.clone(),
            kind: NodeKind::End,
        });
        self.edges.push(CfgEdge {
            from: self.cursor.clone(),
            to: end,
            label: None,
        });
        Cfg {
            nodes: self.nodes,
            edges: self.edges,
        }
    }
}

fn access_node(entity: &str, mode: AccessMode) -> NodeKind {
    NodeKind::Access {
        entity: entity.to_string(),
        mode,
    }
}

fn check(role: &str) -> Condition {
    Condition::CheckRole {
        role: role.to_string(),
    }
}

/// Produce `Generated` from the law-firm mock-up blueprint: two modules
/// (`LawyerExample` for the UI, `DataModel` for the data layer), entities
/// Client, Lawyer, and LegalCase, and eight planted violations reachable
/// from SecretAdminPage and SignUpPage. The blueprint is fixed; no
/// randomness is involved. Its call graph has exactly 83 nodes and 220
/// edges: 25 screens, 25 actions, 30 distinct accesses, 3 entities, wired
/// by 160 call pairs.
pub fn mockup() -> Generated {
    const UI: &str = "LawyerExample";
    const DM: &str = "DataModel";
    let entities = ["Client", "Lawyer", "LegalCase"];

    let policy_rules = [
        ("Client", vec!["Admin", "Lawyer"], vec!["Admin", "Lawyer"]),
        ("Lawyer", vec!["Admin", "Lawyer"], vec!["Admin"]),
        ("LegalCase", vec!["Admin", "Lawyer"], vec!["Admin"]),
    ];
    let mut policy = Policy::default();
    for (entity, read, write) in &policy_rules {
        policy.rules.insert(
            entity.to_string(),
            PolicyRule {
                entity: entity.to_string(),
                read: read.iter().map(|s| s.to_string()).collect(),
                write: write.iter().map(|s| s.to_string()).collect(),
            },
        );
    }

    // Actions every clean screen may call: nothing in this pool reaches an
    // unguarded access.
    let safe_pool = [
        "LawyerExample.NavHeader",
        "LawyerExample.OpenClientView",
        "LawyerExample.OpenLawyerView",
        "LawyerExample.OpenCaseView",
        "LawyerExample.ShowNotifications",
        "LawyerExample.LoadProfile",
        "LawyerExample.RenderMenu",
        "LawyerExample.SearchBox",
        "LawyerExample.Paginate",
        "DataModel.ReadClient",
        "DataModel.WriteClient",
        "DataModel.ReadLawyer",
        "DataModel.WriteLawyer",
        "DataModel.ReadLegalCase",
        "DataModel.WriteLegalCase",
        "DataModel.ClientReport",
        "DataModel.LawyerReport",
        "DataModel.CaseReport",
        "DataModel.BillingReport",
        "DataModel.StaffReport",
        "DataModel.ArchiveReport",
        "DataModel.ArchiveCases",
    ];
    let dm_pool: Vec<&str> = safe_pool
        .iter()
        .copied()
        .filter(|n| n.starts_with("DataModel."))
        .collect();

    let mut ui_screens: Vec<Entrypoint> = Vec::new();

    // The two planted screens. SecretAdminPage reaches LoadSecretData both
    // directly and through RefreshCache, giving its candidates exactly two
    // call paths.
    let mut b = CfgBuilder::new();
    b.call("DataModel.LoadSecretData");
    b.call("LawyerExample.RefreshCache");
    b.call("LawyerExample.NavHeader");
    ui_screens.push(Entrypoint {
        name: "SecretAdminPage".into(),
        allowed_roles: ["Client"].map(String::from).into_iter().collect(),
        cfg: b.finish(),
    });

    let mut b = CfgBuilder::new();
    b.call("DataModel.CreateClientAccount");
    b.call("LawyerExample.NavHeader");
    ui_screens.push(Entrypoint {
        name: "SignUpPage".into(),
        allowed_roles: ["Anonymous"].map(String::from).into_iter().collect(),
        cfg: b.finish(),
    });

    // Clean screens: five calls into the safe pool each, offsets chosen so
    // all 115 pairs are distinct and the whole pool gets used. The first
    // two also access entities directly, behind an Admin check.
    let clean_names = [
        "AdminDashboard",
        "ManageCasesPage",
        "HomePage",
        "AboutPage",
        "ContactPage",
        "LoginPage",
        "ProfilePage",
        "CaseListPage",
        "CaseDetailPage",
        "ClientListPage",
        "ClientDetailPage",
        "LawyerListPage",
        "LawyerDetailPage",
        "CalendarPage",
        "TasksPage",
        "DocumentsPage",
        "BillingPage",
        "InvoicesPage",
        "ReportsPage",
        "SettingsPage",
        "NotificationsPage",
        "HelpPage",
        "SearchPage",
    ];
    let allowed_cycle: [&[&str]; 5] = [
        &["Admin"],
        &["Admin", "Lawyer"],
        &["Lawyer"],
        &["Customer"],
        &["Registered"],
    ];
    for (i, name) in clean_names.iter().enumerate() {
        let mut b = CfgBuilder::new();
        for j in 0..5 {
            b.call(safe_pool[(5 * i + j) % safe_pool.len()]);
        }
        match *name {
            "AdminDashboard" => b.push_guarded(
                check("Admin"),
                vec![
                    access_node("Client", AccessMode::Read),
                    access_node("Lawyer", AccessMode::Read),
                    access_node("LegalCase", AccessMode::Read),
                ],
            ),
            "ManageCasesPage" => b.push_guarded(
                check("Admin"),
                vec![
                    access_node("LegalCase", AccessMode::Read),
                    access_node("LegalCase", AccessMode::Write),
                    access_node("Client", AccessMode::Read),
                ],
            ),
            _ => {}
        }
        ui_screens.push(Entrypoint {
            name: name.to_string(),
            allowed_roles: allowed_cycle[i % allowed_cycle.len()]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            cfg: b.finish(),
        });
    }

    let mut ui_actions: Vec<ActionDef> = Vec::new();
    ui_actions.push(ActionDef {
        name: "NavHeader".into(),
        cfg: CfgBuilder::new().finish(),
    });
    let mut b = CfgBuilder::new();
    b.call("DataModel.LoadSecretData");
    ui_actions.push(ActionDef {
        name: "RefreshCache".into(),
        cfg: b.finish(),
    });
    let ui_generic = [
        "OpenClientView",
        "OpenLawyerView",
        "OpenCaseView",
        "ShowNotifications",
        "LoadProfile",
        "RenderMenu",
        "SearchBox",
        "Paginate",
    ];
    for (k, name) in ui_generic.iter().enumerate() {
        let mut b = CfgBuilder::new();
        for j in 0..3 {
            b.call(dm_pool[(3 * k + j) % dm_pool.len()]);
        }
        ui_actions.push(ActionDef {
            name: name.to_string(),
            cfg: b.finish(),
        });
    }

    let mut dm_actions: Vec<ActionDef> = Vec::new();

    // The planted data layer: both actions access entities with no check.
    let mut b = CfgBuilder::new();
    b.push(access_node("Client", AccessMode::Read));
    b.push(access_node("Lawyer", AccessMode::Read));
    dm_actions.push(ActionDef {
        name: "LoadSecretData".into(),
        cfg: b.finish(),
    });
    let mut b = CfgBuilder::new();
    b.push(access_node("Client", AccessMode::Write));
    dm_actions.push(ActionDef {
        name: "CreateClientAccount".into(),
        cfg: b.finish(),
    });

    for (entity, mode, name) in [
        ("Client", AccessMode::Read, "ReadClient"),
        ("Client", AccessMode::Write, "WriteClient"),
        ("Lawyer", AccessMode::Read, "ReadLawyer"),
        ("Lawyer", AccessMode::Write, "WriteLawyer"),
        ("LegalCase", AccessMode::Read, "ReadLegalCase"),
        ("LegalCase", AccessMode::Write, "WriteLegalCase"),
    ] {
        let mut b = CfgBuilder::new();
        b.push_guarded(check("Admin"), vec![access_node(entity, mode)]);
        dm_actions.push(ActionDef {
            name: name.to_string(),
            cfg: b.finish(),
        });
    }

    let crud_reads = [
        "DataModel.ReadClient",
        "DataModel.ReadLawyer",
        "DataModel.ReadLegalCase",
    ];
    let report_names = [
        "ClientReport",
        "LawyerReport",
        "CaseReport",
        "BillingReport",
        "StaffReport",
        "ArchiveReport",
    ];
    for (k, name) in report_names.iter().enumerate() {
        let mut b = CfgBuilder::new();
        for j in 0..2 {
            b.call(crud_reads[(k + j) % crud_reads.len()]);
        }
        b.push_guarded(
            check("Admin"),
            vec![
                access_node(entities[k % entities.len()], AccessMode::Read),
                access_node(entities[(k + 1) % entities.len()], AccessMode::Read),
            ],
        );
        dm_actions.push(ActionDef {
            name: name.to_string(),
            cfg: b.finish(),
        });
    }

    let mut b = CfgBuilder::new();
    b.call("DataModel.WriteClient");
    b.call("DataModel.WriteLawyer");
    b.call("DataModel.WriteLegalCase");
    b.push_guarded(
        check("Admin"),
        vec![
            access_node("Client", AccessMode::Write),
            access_node("Lawyer", AccessMode::Write),
            access_node("LegalCase", AccessMode::Write),
        ],
    );
    dm_actions.push(ActionDef {
        name: "ArchiveCases".into(),
        cfg: b.finish(),
    });

    let factory = Factory {
        format_version: FORMAT_VERSION,
        name: "lawfirm".into(),
        roles: ["Admin", "Anonymous", "Client", "Customer", "Lawyer", "Registered"]
            .map(String::from)
            .into_iter()
            .collect(),
        default_roles: ["Anonymous", "Registered"].map(String::from).into_iter().collect(),
        entities: entities
            .iter()
            .map(|name| Entity {
                name: name.to_string(),
                module: DM.to_string(),
            })
            .collect(),
        modules: vec![
            ModuleDef {
                name: UI.to_string(),
                screens: ui_screens,
                actions: ui_actions,
            },
            ModuleDef {
                name: DM.to_string(),
                screens: vec![],
                actions: dm_actions,
            },
        ],
    };

    // The violations the blueprint bakes in, expanded one role per tuple.
    let mut planted = Vec::new();
    for (screen, entity, mode, roles) in [
        (
            "LawyerExample.SecretAdminPage",
            "Client",
            AccessMode::Read,
            vec!["Anonymous", "Client", "Registered"],
        ),
        (
            "LawyerExample.SecretAdminPage",
            "Lawyer",
            AccessMode::Read,
            vec!["Anonymous", "Client", "Registered"],
        ),
        (
            "LawyerExample.SignUpPage",
            "Client",
            AccessMode::Write,
            vec!["Anonymous", "Registered"],
        ),
    ] {
        for role in roles {
            planted.push(PlantedFlaw {
                screen: screen.to_string(),
                entity: entity.to_string(),
                mode,
                role: role.to_string(),
            });
        }
    }
    planted.sort();

    Generated {
        factory,
        policy,
        planted,
    }
}

/// Parameters reproducing the large-factory benchmark shape: 691 modules,
/// 321 roles, and a call graph of at least 48455 nodes and 250122 edges.
pub fn b_scale_params() -> GenParams {
    GenParams {
        seed: 1,
        modules: 691,
        screens_per_module: 4,
        actions_per_module: 40,
        entities: 2073,
        roles: 321,
        cfg_nodes_mean: 12,
        guard_probability: 0.6,
        access_probability: 0.12,
        grant_probability: 0.04,
        plant_flaws: 12,
    }
}

pub fn generate_factory(params: &GenParams) -> Result<Generated, GenError> {
    validate_params(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut roles: Vec<String> = Vec::with_capacity(params.roles);
    if params.roles >= 1 {
        roles.push("Anonymous".into());
    }
    if params.roles >= 2 {
        roles.push("Registered".into());
    }
    for i in 2..params.roles {
        roles.push(format!("Role{i:03}"));
    }
    let defaults: Vec<String> = roles.iter().take(2).cloned().collect();
    let nondefault: Vec<String> = roles.iter().skip(2).cloned().collect();

    let module_names: Vec<String> = (0..params.modules).map(|m| format!("Mod{m:04}")).collect();
    let entity_names: Vec<String> = (0..params.entities).map(|e| format!("Ent{e:05}")).collect();

    // Policy first: CFG guards draw from it, and the planted roles are
    // chosen against it.
    let covered: Vec<usize> = if params.entities <= 16 {
        (0..params.entities).collect()
    } else {
        let mut set: BTreeSet<usize> = (0..params.plant_flaws)
            .map(|i| i % params.entities)
            .collect();
        for k in 0..12 {
            set.insert(k * params.entities / 12);
        }
        set.into_iter().collect()
    };
    let mut policy = Policy::default();
    for &e in &covered {
        let read = sample_roles(&mut rng, &roles);
        let write = sample_roles(&mut rng, &roles);
        policy.rules.insert(
            entity_names[e].clone(),
            PolicyRule {
                entity: entity_names[e].clone(),
                read,
                write,
            },
        );
    }

    // Plan the planted flaws, adjusting the policy where every candidate
    // role is already allowed.
    struct Plant {
        module: usize,
        entity: usize,
        mode: AccessMode,
        role: String,
    }
    let mut plants: Vec<Plant> = Vec::with_capacity(params.plant_flaws);
    for i in 0..params.plant_flaws {
        let entity = i % params.entities;
        let mode = if i % 2 == 0 {
            AccessMode::Read
        } else {
            AccessMode::Write
        };
        let rule = policy
            .rules
            .get_mut(&entity_names[entity])
            .expect("planted entities are covered");
        let allowed = match mode {
            AccessMode::Read => &mut rule.read,
            AccessMode::Write => &mut rule.write,
        };
        let pick = (0..nondefault.len())
            .map(|k| &nondefault[(i + k) % nondefault.len()])
            .find(|r| !allowed.contains(*r));
        let role = match pick {
            Some(r) => r.clone(),
            None => {
                // Every leakable role is in the policy; shrink the rule to
                // one role and leak another.
                *allowed = [nondefault[0].clone()].into_iter().collect();
                nondefault[1].clone()
            }
        };
        plants.push(Plant {
            module: i % params.modules,
            entity,
            mode,
            role,
        });
    }

    let mut modules: Vec<ModuleDef> = Vec::with_capacity(params.modules);
    for m in 0..params.modules {
        let local_entities: Vec<usize> = (0..params.entities)
            .filter(|e| e % params.modules == m)
            .collect();
        let forward: Vec<String> = (0..params.actions_per_module)
            .map(|a| format!("{}.Act{a:03}", module_names[m]))
            .collect();
        // Cross-module calls go to the next module but never across a
        // block boundary, so interprocedural chains stay shallow the way
        // separately developed applications keep to themselves.
        let crosses_block = (m + 1) % CROSS_BLOCK == 0;
        let cross: Vec<String> = if m + 1 < params.modules && !crosses_block {
            (0..params.actions_per_module)
                .map(|a| format!("{}.Act{a:03}", module_names[m + 1]))
                .collect()
        } else {
            Vec::new()
        };

        let mut screens: Vec<Entrypoint> = Vec::new();
        for s in 0..params.screens_per_module {
            let mut b = CfgBuilder::new();
            // Guaranteed coverage so no action is dead code: the module's
            // screens split the local actions between them.
            let mut coverage: Vec<&str> = forward
                .iter()
                .skip(s)
                .step_by(params.screens_per_module)
                .map(String::as_str)
                .collect();
            coverage.truncate(16);
            for target in coverage {
                b.call(target);
            }
            grow_noise(
                &mut b,
                &mut rng,
                params,
                &forward,
                &cross,
                &local_entities,
                &entity_names,
                &roles,
                &policy,
            );
            screens.push(Entrypoint {
                name: format!("Scr{s:03}"),
                allowed_roles: sample_roles(&mut rng, &roles),
                cfg: b.finish(),
            });
        }

        let mut actions: Vec<ActionDef> = Vec::new();
        for a in 0..params.actions_per_module {
            let mut b = CfgBuilder::new();
            grow_noise(
                &mut b,
                &mut rng,
                params,
                &forward[(a + 1).min(forward.len())..],
                &cross,
                &local_entities,
                &entity_names,
                &roles,
                &policy,
            );
            actions.push(ActionDef {
                name: format!("Act{a:03}"),
                cfg: b.finish(),
            });
        }

        modules.push(ModuleDef {
            name: module_names[m].clone(),
            screens,
            actions,
        });
    }

    // Planted screens and actions go in last, after all noise, so their
    // indices never disturb the random stream.
    for (i, plant) in plants.iter().enumerate() {
        let action = format!("FlawAct{i:03}");
        let mut b = CfgBuilder::new();
        b.call(&format!("{}.{action}", module_names[plant.module]));
        modules[plant.module].screens.push(Entrypoint {
            name: format!("FlawScr{i:03}"),
            allowed_roles: [plant.role.clone()].into_iter().collect(),
            cfg: b.finish(),
        });
        let mut b = CfgBuilder::new();
        b.push(access_node(&entity_names[plant.entity], plant.mode));
        modules[plant.module].actions.push(ActionDef {
            name: action,
            cfg: b.finish(),
        });
    }

    let factory = Factory {
        format_version: FORMAT_VERSION,
        name: format!("synthetic-{}", params.seed),
        roles: roles.iter().cloned().collect(),
        default_roles: defaults.iter().cloned().collect(),
        entities: entity_names
            .iter()
            .enumerate()
            .map(|(e, name)| Entity {
                name: name.clone(),
                module: module_names[e % params.modules.max(1)].clone(),
            })
            .collect(),
        modules,
    };

    // Expand each plant into per-role tuples against the final policy.
    let mut planted: Vec<PlantedFlaw> = Vec::new();
    for (i, plant) in plants.iter().enumerate() {
        let rule = &policy.rules[&entity_names[plant.entity]];
        let allowed = rule.roles_for(plant.mode);
        let mut may: BTreeSet<String> = defaults.iter().cloned().collect();
        may.insert(plant.role.clone());
        for role in may {
            if !allowed.contains(&role) {
                planted.push(PlantedFlaw {
                    screen: format!("{}.FlawScr{i:03}", module_names[plant.module]),
                    entity: entity_names[plant.entity].clone(),
                    mode: plant.mode,
                    role,
                });
            }
        }
    }
    planted.sort();
    planted.dedup();

    Ok(Generated {
        factory,
        policy,
        planted,
    })
}

/// One to two roles, uniformly drawn.
fn sample_roles(rng: &mut ChaCha8Rng, roles: &[String]) -> BTreeSet<String> {
    let k = rng.gen_range(1..=2.min(roles.len().max(1)));
    roles
        .choose_multiple(rng, k.min(roles.len()))
        .cloned()
        .collect()
}

/// Appends random spine segments: accesses (guarded or not), role grants
/// and revokes, calls, and stray branches.
#[allow(clippy::too_many_arguments)]
fn grow_noise(
    b: &mut CfgBuilder,
    rng: &mut ChaCha8Rng,
    params: &GenParams,
    forward: &[String],
    cross: &[String],
    local_entities: &[usize],
    entity_names: &[String],
    roles: &[String],
    policy: &Policy,
) {
    let mean = params.cfg_nodes_mean.max(1);
    let segments = rng.gen_range(mean.div_ceil(2)..=mean + mean / 2);
    for _ in 0..segments {
        let roll: f64 = rng.gen();
        if roll < params.access_probability && !entity_names.is_empty() {
            let entity = pick_entity(rng, local_entities, entity_names.len());
            let mode = if rng.gen_bool(0.5) {
                AccessMode::Read
            } else {
                AccessMode::Write
            };
            let node = access_node(&entity_names[entity], mode);
            if rng.gen::<f64>() < params.guard_probability {
                let cond = guard_condition(b, rng, policy, &entity_names[entity], mode, roles);
                b.push_guarded(cond, vec![node]);
            } else {
                b.push(node);
            }
        } else if roll < params.access_probability + params.grant_probability && !roles.is_empty()
        {
            let role = roles.choose(rng).expect("roles is non-empty").clone();
            if rng.gen_bool(0.25) {
                b.push(NodeKind::Revoke { role });
            } else {
                b.push(NodeKind::Grant { role });
            }
        } else {
            let sub: f64 = rng.gen();
            let use_cross = !cross.is_empty() && (forward.is_empty() || rng.gen_bool(0.15));
            if sub < 0.75 && (!forward.is_empty() || !cross.is_empty()) {
                let pool = if use_cross { cross } else { forward };
                b.call(pool.choose(rng).expect("pool is non-empty"));
            } else if sub < 0.9 && !roles.is_empty() {
                let cond = random_condition(b, rng, roles, 2);
                let inner = if rng.gen_bool(0.4) {
                    vec![NodeKind::Grant {
                        role: roles.choose(rng).expect("roles is non-empty").clone(),
                    }]
                } else {
                    vec![]
                };
                b.push_guarded(cond, inner);
            } else {
                b.push(NodeKind::Other);
            }
        }
    }
}

fn pick_entity(rng: &mut ChaCha8Rng, local: &[usize], total: usize) -> usize {
    if !local.is_empty() && rng.gen_bool(0.7) {
        *local.choose(rng).expect("local is non-empty")
    } else {
        rng.gen_range(0..total)
    }
}

/// Guard for an access that must hold up: when the entity is covered, the
/// check tests a role from its policy, so the guarded branch can never be
/// a finding.
fn guard_condition(
    b: &mut CfgBuilder,
    rng: &mut ChaCha8Rng,
    policy: &Policy,
    entity: &str,
    mode: AccessMode,
    roles: &[String],
) -> Condition {
    if let Some(rule) = policy.rules.get(entity) {
        let allowed: Vec<&String> = rule.roles_for(mode).iter().collect();
        if let Some(role) = allowed.choose(rng) {
            let base = check(role);
            return if rng.gen_bool(0.3) {
                Condition::And {
                    args: vec![
                        base,
                        Condition::Opaque {
                            id: b.fresh_opaque(),
                        },
                    ],
                }
            } else {
                base
            };
        }
    }
    random_condition(b, rng, roles, 2)
}

fn random_condition(
    b: &mut CfgBuilder,
    rng: &mut ChaCha8Rng,
    roles: &[String],
    depth: usize,
) -> Condition {
    let roll: f64 = rng.gen();
    if depth == 0 || roll < 0.45 {
        check(roles.choose(rng).expect("roles is non-empty"))
    } else if roll < 0.65 {
        Condition::Opaque {
            id: b.fresh_opaque(),
        }
    } else if roll < 0.8 {
        Condition::Not {
            arg: Box::new(random_condition(b, rng, roles, depth - 1)),
        }
    } else if roll < 0.9 {
        Condition::And {
            args: vec![
                random_condition(b, rng, roles, depth - 1),
                random_condition(b, rng, roles, depth - 1),
            ],
        }
    } else {
        Condition::Or {
            args: vec![
                random_condition(b, rng, roles, depth - 1),
                random_condition(b, rng, roles, depth - 1),
            ],
        }
    }
}

/// Canonical JSON text for a planted-flaw manifest.
pub fn serialize_planted(planted: &[PlantedFlaw]) -> String {
    let mut text =
        serde_json::to_string_pretty(planted).expect("planted serialization is infallible");
    text.push('\n');
    text
}
